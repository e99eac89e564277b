use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use patchext::boundary::{solve_boundary_patch, BoundarySetting};
use patchext::coloring::{three_color_refine, two_color_refine, verify_coloring};
use patchext::estimator::{
    efficiency_report, error_bound, projected_solution, reconstruct, EstimatorOptions, MeshProblem, Polynomial,
    ProblemData,
};
use patchext::extension::data::{random_h1_data, random_hdiv_data};
use patchext::extension::{
    global_min_h1, global_min_hdiv, infer_h1_mode, infer_hdiv_mode, stability_sweep as sweep, sweep_construct_h1,
    sweep_construct_hdiv, ExtensionData, Setting,
};
use patchext::fields::BrokenScalarField;
use patchext::mesh::{kuhn_cube, TetMesh};
use patchext::shelling::{enumerate_patch_with, verify_enumeration, ShellingMethod};
use patchext::topology::{check_compatibility_h1, check_compatibility_hdiv, shape_regularity, Marker, PatchKind, PatchMesh};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::report::{emit, emit_json, finite, CmdResult, Failure};
use crate::source::PatchSource;

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse()
}

/// Degree list given as `a..b` (inclusive), `a,b,c` or a single degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Degrees(pub Vec<usize>);

pub fn parse_degrees(s: &str) -> Result<Degrees, String> {
    let bad = || format!("invalid degree list `{s}` (expected e.g. 1..4 or 1,3,5)");
    let out: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if out.is_empty() || out.len() > 32 {
        return Err(bad());
    }
    Ok(Degrees(out))
}

fn residual_map(r: &[(String, f64)]) -> Value {
    Value::Object(r.iter().map(|(k, v)| (k.clone(), finite(*v))).collect())
}

fn patch_summary(patch: &PatchMesh) -> Value {
    json!({
        "kind": match patch.kind { PatchKind::Interior => "interior", PatchKind::Boundary => "boundary" },
        "cells": patch.cell_count(),
        "faces": patch.faces.len(),
        "gamma": finite(shape_regularity(patch)),
    })
}

#[derive(Debug, Clone, Args)]
pub struct PatchCheckArgs {
    #[command(flatten)]
    pub source: PatchSource,
    /// h1 or hdiv.
    #[arg(long, value_parser = parse_setting, default_value = "h1")]
    pub setting: Setting,
    /// Polynomial degree of data and extension.
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Random seed [env: PATCHEXT_SEED, config: seed, default: 0].
    #[arg(long, env = "PATCHEXT_SEED", hide_env = true)]
    pub seed: Option<u64>,
    /// Also run the flatten, symmetrize, extend, solve, restrict path on boundary patches.
    #[arg(long)]
    pub boundary: bool,
    /// Add this constant to the data on one face (or cell), breaking compatibility when nonzero.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub perturb: f64,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn patch_check(a: &PatchCheckArgs, cfg: &Config) -> CmdResult {
    if a.p == 0 {
        return Err(Failure::Usage("--p must be at least 1".into()));
    }
    let seed = cfg.seed(a.seed);
    let (patch, global) = a.source.build(seed)?;
    if a.boundary && patch.kind != PatchKind::Boundary {
        return Err(Failure::Usage("--boundary needs a boundary patch".into()));
    }
    let to_global = |v: usize| global.as_ref().map_or(v, |g| g[v]);
    let mut data = match a.setting {
        Setting::H1 => ExtensionData::H1(random_h1_data(&patch, a.p, seed)),
        Setting::Hdiv => ExtensionData::Hdiv(random_hdiv_data(&patch, a.p, seed)),
    };
    // leading modal coefficients of constants: 1/sqrt(2) on faces, 1/sqrt(6) on cells
    match &mut data {
        ExtensionData::H1(r) => {
            if let Some(f) = patch.faces.class.iter().position(|c| *c == patchext::topology::FaceClass::Interior) {
                r.values[f][0] += a.perturb * 2f64.sqrt();
            }
        }
        ExtensionData::Hdiv(d) => d.cells.values[0][0] += a.perturb * 6f64.sqrt(),
    }
    let compatibility = match &data {
        ExtensionData::H1(r) => {
            let c = check_compatibility_h1(&patch, r, infer_h1_mode(&patch))?;
            let worst_edge = c.worst_edge.map(|e| e.map(to_global));
            let worst_face = c.worst_face.map(|f| patch.faces.faces[f].map(to_global));
            let report = json!({
                "passed": c.passed,
                "edge_defect": finite(c.edge_defect),
                "boundary_defect": finite(c.boundary_defect),
                "tolerance": finite(c.tolerance),
                "worst_edge": worst_edge,
                "worst_face": worst_face,
            });
            if !c.passed {
                let message = match worst_edge {
                    Some(e) if c.edge_defect > c.tolerance => {
                        format!("jump data fail the edge condition around edge {e:?} (defect {:.3e})", c.edge_defect)
                    }
                    _ => format!("jump data do not vanish on the patch boundary (defect {:.3e})", c.boundary_defect),
                };
                return Err(Failure::numerical("IncompatibleData", message, report));
            }
            report
        }
        ExtensionData::Hdiv(d) => {
            let c = check_compatibility_hdiv(&patch, d, infer_hdiv_mode(&patch))?;
            let report = json!({
                "passed": c.passed,
                "defect": finite(c.defect),
                "tolerance": finite(c.tolerance),
                "waived": c.waived,
            });
            if !c.passed {
                let message = format!("flux balance fails (defect {:.3e})", c.defect);
                return Err(Failure::numerical("IncompatibleData", message, report));
            }
            report
        }
    };
    let mut out = json!({
        "schema": "patchext.patch-check/1",
        "patch": patch_summary(&patch),
        "source": a.source.name(),
        "setting": a.setting.name(),
        "p": a.p,
        "seed": seed,
        "compatibility": compatibility,
    });
    let obj = out.as_object_mut().unwrap();
    match patch.kind {
        PatchKind::Interior => {
            let (e, method) = enumerate_patch_with(&patch, 0, seed)?;
            let (sweep_res, global_res) = match &data {
                ExtensionData::H1(r) => {
                    let s = sweep_construct_h1(&patch, &e, r, a.p)?;
                    let g = global_min_h1(&patch, r, a.p)?;
                    ((s.energy, s.residuals), (g.energy, g.residuals))
                }
                ExtensionData::Hdiv(d) => {
                    let s = sweep_construct_hdiv(&patch, &e, d, a.p)?;
                    let g = global_min_hdiv(&patch, d, a.p)?;
                    ((s.energy, s.residuals), (g.energy, g.residuals))
                }
            };
            obj.insert("shelling".into(), json!(method_name(method)));
            obj.insert("sweep_energy".into(), finite(sweep_res.0));
            obj.insert("sweep_residuals".into(), residual_map(&sweep_res.1));
            obj.insert("energy".into(), finite(global_res.0));
            obj.insert("residuals".into(), residual_map(&global_res.1));
            obj.insert("inclusion_holds".into(), json!(global_res.0 <= sweep_res.0 + 1e-9));
        }
        PatchKind::Boundary => {
            let setting = BoundarySetting::infer(&patch, a.setting).ok().map(|s| format!("{s:?}"));
            let sol = solve_boundary_patch(&patch, &data, a.p, a.boundary)?;
            obj.insert("boundary_setting".into(), json!(setting));
            obj.insert("energy".into(), finite(sol.energy));
            obj.insert("residuals".into(), residual_map(&sol.residuals));
            if let Some(cc) = sol.cross_check {
                obj.insert(
                    "symmetrized".into(),
                    json!({
                        "flattened_identity": cc.flattened_identity,
                        "extension_defect": finite(cc.extension_defect),
                        "energy_symmetrized": finite(cc.energy_symmetrized),
                        "energy_restricted": finite(cc.energy_restricted),
                        "energy_flat_direct": finite(cc.energy_flat_direct),
                        "residuals_flat": residual_map(&cc.residuals_flat),
                        "residuals_original": residual_map(&cc.residuals_original),
                        "sqrt2_bound_holds": cc.energy_restricted <= 2f64.sqrt() * cc.energy_symmetrized + 1e-9,
                        "gamma_flat": finite(cc.gamma_flat),
                    }),
                );
            }
        }
    }
    emit_json(&out, a.out.as_deref())
}

fn method_name(m: ShellingMethod) -> Value {
    match m {
        ShellingMethod::Line { attempts } => json!({ "method": "line", "attempts": attempts }),
        ShellingMethod::Backtracking => json!({ "method": "backtracking" }),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: PatchSource,
    /// Degrees, e.g. 1..4 (inclusive) or 1,2,5.
    #[arg(long, value_parser = parse_degrees, default_value = "1..4")]
    pub p: Degrees,
    /// h1 or hdiv.
    #[arg(long, value_parser = parse_setting, default_value = "h1")]
    pub setting: Setting,
    /// Random seed [env: PATCHEXT_SEED, config: seed, default: 0].
    #[arg(long, env = "PATCHEXT_SEED", hide_env = true)]
    pub seed: Option<u64>,
    /// Degree offset of the proxy solution [config: delta, default: 6].
    #[arg(long)]
    pub delta: Option<usize>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn stability_sweep(a: &SweepArgs, cfg: &Config) -> CmdResult {
    let (seed, delta) = (cfg.seed(a.seed), cfg.delta(a.delta));
    let degrees = a.p.0.clone();
    if degrees.contains(&0) && a.setting == Setting::H1 {
        return Err(Failure::Usage("H1 degrees start at 1".into()));
    }
    if delta < 2 {
        return Err(Failure::Usage("--delta must be at least 2".into()));
    }
    let (patch, _) = a.source.build(seed)?;
    let reports = sweep(&patch, a.setting, degrees, seed, delta)?;
    let mut csv = String::from("p,setting,energy_p,energy_proxy,ratio,proxy_convergence,gamma\n");
    for r in &reports {
        writeln!(
            csv,
            "{},{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
            r.p,
            r.setting.name(),
            r.energy_p,
            r.energy_proxy,
            r.ratio,
            r.proxy_convergence,
            r.gamma
        )
        .unwrap();
    }
    emit(&csv, a.out.as_deref())?;
    if let Some(r) = reports.iter().find(|r| !r.converged) {
        return Err(Failure::numerical(
            "ProxyNotConverged",
            format!("proxy at degree {} did not converge (relative change {:.3e})", r.p + delta, r.proxy_convergence),
            json!({ "p": r.p, "proxy_convergence": finite(r.proxy_convergence) }),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ShellingArgs {
    #[command(flatten)]
    pub source: PatchSource,
    /// Cell that starts the enumeration.
    #[arg(long, default_value_t = 0)]
    pub anchor: usize,
    /// Random seed [env: PATCHEXT_SEED, config: seed, default: 0].
    #[arg(long, env = "PATCHEXT_SEED", hide_env = true)]
    pub seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn shelling(a: &ShellingArgs, cfg: &Config) -> CmdResult {
    let seed = cfg.seed(a.seed);
    let (patch, global) = a.source.build(seed)?;
    if patch.kind != PatchKind::Interior {
        return Err(Failure::Usage("shelling needs an interior patch".into()));
    }
    if a.anchor >= patch.cell_count() {
        return Err(Failure::Usage(format!("anchor {} out of range ({} cells)", a.anchor, patch.cell_count())));
    }
    let (e, method) = enumerate_patch_with(&patch, a.anchor, seed)?;
    let (valid, violations) = verify_enumeration(&patch, &e);
    let three = three_color_refine(&patch, a.anchor)?;
    let three_violations = verify_coloring(&three, &patch, 3);
    let mut fan_violations = 0;
    let mut refined_fans = 0;
    for fan in &patch.fans {
        let r = two_color_refine(&patch, fan.edge, fan.cells[0])?;
        refined_fans += usize::from(r.cells.len() != fan.cells.len());
        fan_violations += verify_coloring(&r, &patch, 2).len();
    }
    let cells: Vec<[usize; 4]> = match &global {
        Some(g) => patch.cells.iter().map(|c| c.map(|v| g[v])).collect(),
        None => patch.cells.clone(),
    };
    let out = json!({
        "schema": "patchext.shelling/1",
        "source": a.source.name(),
        "seed": seed,
        "patch": patch_summary(&patch),
        "cells": cells,
        "anchor": a.anchor,
        "method": method_name(method),
        "order": e.order,
        "sharp": e.sharp,
        "flat": e.flat,
        "valid": valid,
        "violations": violations.iter().map(|v| json!({ "position": v.position, "edge": v.edge, "message": v.message })).collect::<Vec<_>>(),
        "three_coloring": { "cells": three.cells.len(), "violations": three_violations },
        "two_coloring": { "fans": patch.fans.len(), "refined_fans": refined_fans, "violations": fan_violations },
    });
    emit_json(&out, a.out.as_deref())?;
    if !valid {
        return Err(Failure::numerical("EnumerationFailed", "enumeration failed verification", json!({ "violations": violations.len() })));
    }
    Ok(())
}

type Terms = Vec<(f64, u32, u32, u32)>;

/// Problem description: either a known solution or explicit data, as polynomial
/// terms `[coefficient, i, j, k]` for `coefficient x^i y^j z^k`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    #[serde(default)]
    solution: Option<Terms>,
    #[serde(default)]
    f: Option<Terms>,
    #[serde(default)]
    u_d: Option<Terms>,
    /// Neumann data `u_N = g . n`.
    #[serde(default)]
    g: Option<[Terms; 3]>,
}

fn poly(terms: &[(f64, u32, u32, u32)]) -> Polynomial {
    Polynomial::new(terms.iter().map(|&(c, i, j, k)| (c, [i, j, k])).collect())
}

#[derive(Debug, Deserialize)]
struct FieldFile {
    degree: usize,
    coeffs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Mesh file in the tetmesh v1 format.
    #[arg(long, conflicts_with = "kuhn")]
    pub mesh: Option<PathBuf>,
    /// Use the Kuhn mesh of the unit cube with n^3 subcubes (top face Neumann, others Dirichlet).
    #[arg(long)]
    pub kuhn: Option<usize>,
    /// Problem JSON; the built-in degree-4 manufactured solution when absent.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Degree p' of the discrete solution.
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    /// Discrete solution as JSON `{"degree": p, "coeffs": [[...], ...]}` in the modal basis;
    /// the corrected elementwise projection of the exact solution when absent.
    #[arg(long)]
    pub uh: Option<PathBuf>,
    /// Summary JSON (stdout when absent).
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Per-element CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Relative tolerance of the hat orthogonality check [config: orthogonality_tol, default: 1e-10].
    #[arg(long)]
    pub orthogonality_tol: Option<f64>,
    /// Run the patch solves sequentially.
    #[arg(long)]
    pub sequential: bool,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::numerical("ParseError", format!("{}: {e}", path.display()), json!({ "line": e.line() }))
    })
}

pub fn estimate(a: &EstimateArgs, cfg: &Config) -> CmdResult {
    if a.degree == 0 {
        return Err(Failure::Usage("--degree must be at least 1".into()));
    }
    let mesh = match (&a.mesh, a.kuhn) {
        (Some(p), _) => TetMesh::read(p)?,
        (None, Some(0)) => return Err(Failure::Usage("--kuhn must be at least 1".into())),
        (None, n) => {
            kuhn_cube(n.unwrap_or(2), |x, _| if x.z > 1.0 - 1e-12 { Marker::Neumann } else { Marker::Dirichlet })
        }
    };
    let (data, exact) = match &a.problem {
        None => {
            let u = patchext::estimator::manufactured_polynomial();
            (ProblemData::manufactured(&u), Some(u))
        }
        Some(path) => {
            let pf: ProblemFile = read_json(path)?;
            match (pf.solution, pf.f, pf.u_d, pf.g) {
                (Some(u), None, None, None) => {
                    let u = poly(&u);
                    (ProblemData::manufactured(&u), Some(u))
                }
                (None, Some(f), u_d, g) => {
                    let g = g.map(|g| [poly(&g[0]), poly(&g[1]), poly(&g[2])]).unwrap_or_default();
                    (ProblemData { f: poly(&f), u_d: u_d.map(|u| poly(&u)).unwrap_or_default(), g }, None)
                }
                _ => return Err(Failure::Usage("problem file needs either `solution` or `f` (with `u_d`, `g`)".into())),
            }
        }
    };
    let problem = MeshProblem { mesh, data, degree: a.degree };
    let u_h = match (&a.uh, &exact) {
        (Some(path), _) => {
            let ff: FieldFile = read_json(path)?;
            if ff.coeffs.len() != problem.mesh.cells.len() {
                return Err(Failure::Usage(format!(
                    "u_h has {} cells, the mesh {}",
                    ff.coeffs.len(),
                    problem.mesh.cells.len()
                )));
            }
            let n = patchext::spaces::dubiner::dim_tet(ff.degree);
            if ff.coeffs.iter().any(|c| c.len() != n) {
                return Err(Failure::Usage(format!("u_h coefficients must have length {n} for degree {}", ff.degree)));
            }
            BrokenScalarField {
                degree: ff.degree,
                coeffs: ff.coeffs.into_iter().map(nalgebra_vector).collect(),
            }
        }
        (None, Some(u)) => projected_solution(&problem, u, a.degree)?,
        (None, None) => return Err(Failure::Usage("--uh is required when the problem has no known solution".into())),
    };
    let defaults = EstimatorOptions::default();
    let opts = EstimatorOptions {
        parallel: !a.sequential,
        orthogonality_tol: cfg.orthogonality_tol(a.orthogonality_tol, defaults.orthogonality_tol),
    };
    let rec = reconstruct(&problem, &u_h, &opts)?;
    let bound = error_bound(&problem, &u_h, &rec);
    let eff = exact.as_ref().map(|u| efficiency_report(&problem, &u_h, &bound, u));
    let audit = &rec.audit;
    let out = json!({
        "schema": "patchext.estimate/1",
        "cells": problem.mesh.cells.len(),
        "vertices": problem.mesh.used_vertices().len(),
        "degree": a.degree,
        "potential_degree": problem.potential_degree(),
        "flux_degree": problem.flux_degree(),
        "eta": finite(bound.eta),
        "eta_with_jumps": finite(bound.eta_with_jumps),
        "error": eff.as_ref().map(|e| finite(e.error)),
        "effectivity": eff.as_ref().map(|e| finite(e.effectivity)),
        "error_with_jumps": eff.as_ref().map(|e| finite(e.error_with_jumps)),
        "effectivity_with_jumps": eff.as_ref().map(|e| finite(e.effectivity_with_jumps)),
        "audit": {
            "divergence": finite(audit.divergence),
            "normal_jump": finite(audit.normal_jump),
            "neumann": finite(audit.neumann),
            "potential_jump": finite(audit.potential_jump),
            "dirichlet": finite(audit.dirichlet),
            "patch_residual": finite(audit.patch_residual),
        },
    });
    if let Some(path) = &a.csv {
        let mut csv = String::from("cell,eta_k,flux_k,potential_k,flux_ratio,potential_ratio\n");
        let opt = |v: Option<f64>| v.filter(|x| x.is_finite()).map_or(String::new(), |x| format!("{x:.15e}"));
        for k in 0..problem.mesh.cells.len() {
            let (fr, pr) = eff.as_ref().map_or((None, None), |e| (e.flux_ratio[k], e.potential_ratio[k]));
            writeln!(
                csv,
                "{k},{:.15e},{:.15e},{:.15e},{},{}",
                bound.eta_k[k],
                bound.flux_k[k],
                bound.potential_k[k],
                opt(fr),
                opt(pr)
            )
            .unwrap();
        }
        emit(&csv, Some(path))?;
    }
    emit_json(&out, a.json.as_deref())
}

fn nalgebra_vector(v: Vec<f64>) -> patchext::nalgebra::DVector<f64> {
    patchext::nalgebra::DVector::from_vec(v)
}
