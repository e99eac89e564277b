use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-conforming patch: {0}")]
    NonConformingPatch(String),
    #[error("degenerate cell {cell}: volume {volume:e} below floor {floor:e}")]
    DegenerateCell { cell: usize, volume: f64, floor: f64 },
    #[error("boundary marker on face {0:?} which does not contain the center vertex")]
    DanglingBoundaryMarker([usize; 3]),
    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("face is not a face of the cell")]
    FaceNotInCell,
    #[error("face {0} is not an interior face")]
    NotInteriorFace(usize),
    #[error("singular affine map")]
    SingularMap,
    #[error("incompatible data: {reason} (defect {defect:e})")]
    IncompatibleData { reason: String, defect: f64 },
    #[error("discontinuous Dirichlet data across a shared edge (mismatch {0:e})")]
    DiscontinuousData(f64),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("enumeration failed: {0}")]
    EnumerationFailed(String),
    #[error("edge fan is open")]
    OpenFan,
    #[error("coloring failed: {0}")]
    ColoringFailed(String),
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),
    #[error("flattening produced a degenerate cell ({0})")]
    FlatteningDegenerate(String),
    #[error("constraint violated: {what} (residual {residual:e})")]
    ConstraintViolated { what: String, residual: f64 },
    #[error("hat orthogonality violated at vertices {0:?}")]
    OrthogonalityViolated(Vec<usize>),
    #[error("patch solve failed at vertex {vertex}: {source}")]
    PatchSolveFailed { vertex: usize, source: Box<Error> },
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("non-manifold mesh: {0}")]
    NonManifold(String),
    #[error("marker on face {0:?}, which is not a boundary face of the mesh")]
    InvalidMarker([usize; 3]),
    #[error("unmarked boundary face {0:?}")]
    UnmarkedBoundaryFace([usize; 3]),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Variant name, used in machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonConformingPatch(..) => "NonConformingPatch",
            Error::DegenerateCell { .. } => "DegenerateCell",
            Error::DanglingBoundaryMarker(..) => "DanglingBoundaryMarker",
            Error::DegreeMismatch { .. } => "DegreeMismatch",
            Error::FaceNotInCell => "FaceNotInCell",
            Error::NotInteriorFace(..) => "NotInteriorFace",
            Error::SingularMap => "SingularMap",
            Error::IncompatibleData { .. } => "IncompatibleData",
            Error::DiscontinuousData(..) => "DiscontinuousData",
            Error::SingularSystem(..) => "SingularSystem",
            Error::EnumerationFailed(..) => "EnumerationFailed",
            Error::OpenFan => "OpenFan",
            Error::ColoringFailed(..) => "ColoringFailed",
            Error::UnsupportedConfiguration(..) => "UnsupportedConfiguration",
            Error::FlatteningDegenerate(..) => "FlatteningDegenerate",
            Error::ConstraintViolated { .. } => "ConstraintViolated",
            Error::OrthogonalityViolated(..) => "OrthogonalityViolated",
            Error::PatchSolveFailed { .. } => "PatchSolveFailed",
            Error::ParseError { .. } => "ParseError",
            Error::NonManifold(..) => "NonManifold",
            Error::InvalidMarker(..) => "InvalidMarker",
            Error::UnmarkedBoundaryFace(..) => "UnmarkedBoundaryFace",
            Error::Io(..) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
