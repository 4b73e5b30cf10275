use std::collections::BTreeSet;

use serde_json::{json, Value};

use flatbeck::beck::{dichotomy_report, enumerate_spanned_flats, PointConfig, DEFAULT_BUDGET};
use flatbeck::decompose::{decompose, trace_violations, verify_decomposition, DecomposeConfig, DecomposeError};
use flatbeck::exactlin::{fmt_scalar, q, to_f64, Scalar};
use flatbeck::flatcollect::{find_minimal_subfamily, is_minimal, partition_cost, Partition};
use flatbeck::flats::AffineFlat;
use flatbeck::measures::{frostman_fit, irreducibility_modulus, DiscreteMeasure, ModulusConfig};
use flatbeck::project::{join_meet, pushforward};
use flatbeck::scene::{dyadic_scales, GraphSpec, Scene};
use flatbeck::stability::{certify_stability, rank_r, IndexPair, RankOutcome, StabilityConfig, StabilityError, StableFrame};
use flatbeck::thin::{
    dyadic_window, prune_planes, pushforward_frostman, verify_thin_planes, verify_thin_tubes, ThinConfig, ThinError, ThinGraph,
    ThinReport,
};

pub const COMMANDS: &[&str] =
    &["analyze-flats", "decompose", "stability", "beck", "thin-verify", "thin-prune", "project", "pushforward-dim"];

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Budget(String),
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

pub struct Report {
    pub json: Value,
    /// CSV text with columns `scale,max_mass,bound,ratio`.
    pub table: Option<String>,
    pub passed: bool,
}

pub struct Ctx<'a> {
    pub seed: u64,
    pub scales: Option<(u32, u32)>,
    pub budget: Option<usize>,
    pub scene: &'a Scene,
}

impl Ctx<'_> {
    fn scales_for(&self, measures: &[DiscreteMeasure]) -> Result<Vec<Scalar>, CliError> {
        match self.scales.or(self.scene.params.scales().map_err(input)?) {
            Some(r) => Ok(dyadic_scales(r)),
            None => Ok(dyadic_window(measures)),
        }
    }

    fn name(&self, key: &str) -> Result<Option<String>, CliError> {
        self.scene.params.string(key).map_err(input)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.scene.params.f64(key).map_err(input)?.unwrap_or(default))
    }

    fn f64_req(&self, key: &str) -> Result<f64, CliError> {
        self.scene.params.f64(key).map_err(input)?.ok_or_else(|| CliError::Input(format!("parameters.{key}: missing")))
    }

    fn scalar_or(&self, key: &str, default: Scalar) -> Result<Scalar, CliError> {
        Ok(self.scene.params.scalar(key).map_err(input)?.unwrap_or(default))
    }

    fn scalar_req(&self, key: &str) -> Result<Scalar, CliError> {
        self.scene.params.scalar(key).map_err(input)?.ok_or_else(|| CliError::Input(format!("parameters.{key}: missing")))
    }
}

pub fn dispatch(command: &str, ctx: &Ctx) -> Result<Report, CliError> {
    match command {
        "analyze-flats" => analyze_flats(ctx),
        "decompose" => decompose_cmd(ctx),
        "stability" => stability(ctx),
        "beck" => beck(ctx),
        "thin-verify" => thin_verify(ctx),
        "thin-prune" => thin_prune(ctx),
        "project" => project(ctx),
        "pushforward-dim" => pushforward_dim(ctx),
        other => Err(CliError::Input(format!("unknown command {other:?}"))),
    }
}

fn s(x: &Scalar) -> Value {
    Value::String(fmt_scalar(x))
}

fn vector(v: &[Scalar]) -> Value {
    Value::Array(v.iter().map(s).collect())
}

fn flat(f: &AffineFlat) -> Value {
    json!({
        "dim": f.dim(),
        "basepoint": vector(f.basepoint()),
        "directions": f.directions().iter().map(|d| vector(d)).collect::<Vec<_>>(),
    })
}

fn partition(p: &Partition) -> Value {
    json!(p.blocks())
}

fn csv(rows: impl IntoIterator<Item = (Scalar, Scalar, f64, f64)>) -> String {
    let mut out = String::from("scale,max_mass,bound,ratio\n");
    for (scale, m, b, r) in rows {
        out += &format!("{},{},{:.12e},{:.12e}\n", fmt_scalar(&scale), fmt_scalar(&m), b, r);
    }
    out
}

fn analyze_flats(ctx: &Ctx) -> Result<Report, CliError> {
    let sc = ctx.scene;
    let names: Vec<String> = match sc.params.0.get("flats") {
        Some(Value::Array(a)) => a.iter().map(|x| x.as_str().map(str::to_owned).ok_or_else(|| input("parameters.flats: expected names"))).collect::<Result<_, _>>()?,
        _ => sc.flats.keys().cloned().collect(),
    };
    let flats: Vec<AffineFlat> = names
        .iter()
        .enumerate()
        .map(|(i, n)| sc.flat(n, &format!("parameters.flats[{i}]")).cloned())
        .collect::<Result<_, _>>()
        .map_err(input)?;
    if flats.is_empty() {
        return Err(input("scene has no flats"));
    }
    let cost = partition_cost(&flats).map_err(|e| match e {
        flatbeck::flatcollect::CollectError::TooLarge { .. } => CliError::Budget(e.to_string()),
        e => input(e),
    })?;
    let n = sc.ambient_dim;
    let nc = cost.cost >= n;
    let minimal = is_minimal(&flats).map_err(input)?;
    let sub = if nc { Some(find_minimal_subfamily(cost.least_minimizer(), &flats).map_err(input)?) } else { None };
    let json = json!({
        "flats": names,
        "dims": flats.iter().map(AffineFlat::dim).collect::<Vec<_>>(),
        "cost": cost.cost,
        "n_count": cost.n_count,
        "least_minimizer": partition(cost.least_minimizer()),
        "minimizers": cost.minimizers.iter().map(partition).collect::<Vec<_>>(),
        "nc": nc,
        "minimal": minimal,
        "minimal_subfamily": sub,
    });
    Ok(Report { json, table: None, passed: nc })
}

fn decompose_cmd(ctx: &Ctx) -> Result<Report, CliError> {
    let (name, mu) = ctx.scene.measure(ctx.name("measure")?.as_deref()).map_err(input)?;
    let n = ctx.scene.ambient_dim;
    let cfg = DecomposeConfig {
        w: ctx.scalar_req("w")?,
        theta: ctx.scalar_or("theta", q(1, 2))?,
        min_flat_dim: ctx.f64_or("min_flat_dim", 1.0)? as usize,
        max_subsets: ctx.budget.unwrap_or(100_000),
        seed: ctx.seed,
        ..Default::default()
    };
    let tau = ctx.scalar_or("tau", q(1, 4))?;
    let r = match decompose(mu, n, &cfg) {
        Ok(r) => r,
        Err(DecomposeError::NotDiscretelyNc(w)) => {
            let json = json!({"measure": name, "verdict": "fail", "clause": format!("not discretely NC at scale w={w}")});
            return Ok(Report { json, table: None, passed: false });
        }
        Err(e) => return Err(input(e)),
    };
    let mcfg = ModulusConfig { seed: ctx.seed, ..Default::default() };
    let v = verify_decomposition(&r, n, &cfg.w, &tau, &mcfg).map_err(input)?;
    let violations = trace_violations(&r.trace);
    let passed = v.passed() && violations.is_empty();
    let json = json!({
        "measure": name,
        "w": s(&cfg.w),
        "theta": s(&cfg.theta),
        "tau": s(&tau),
        "flats": r.flats.iter().map(flat).collect::<Vec<_>>(),
        "pieces": r.pieces.iter().zip(&v.pieces).map(|(p, c)| json!({
            "atoms": p.len(),
            "mass": s(p.total_mass()),
            "flat_dim": c.flat_dim,
            "modulus": c.tau.as_ref().map(s),
            "modulus_ok": c.ok,
            "witness": c.witness.as_ref().map(flat),
        })).collect::<Vec<_>>(),
        "overlap": v.overlap.as_ref().map(|(i, j, p)| json!({"pieces": [i, j], "point": vector(p)})),
        "cost": v.cost,
        "cost_ok": v.cost_ok,
        "trace": r.trace.iter().map(|t| json!({"step": t.step, "cost": t.cost, "n_count": t.n_count, "partition": partition(&t.partition)})).collect::<Vec<_>>(),
        "trace_violations": violations,
    });
    Ok(Report { json, table: None, passed })
}

fn build_frame(ctx: &Ctx) -> Result<(String, StableFrame), CliError> {
    let sc = ctx.scene;
    let (name, spec) = sc.frame(ctx.name("frame")?.as_deref()).map_err(input)?;
    let flats = spec.flats.iter().map(|f| sc.flats[f].clone()).collect();
    let measures = spec.measures.iter().map(|row| row.iter().map(|m| sc.measures[m].clone()).collect()).collect();
    Ok((name.to_owned(), StableFrame::new(flats, measures).map_err(input)?))
}

fn stability(ctx: &Ctx) -> Result<Report, CliError> {
    let (name, frame) = build_frame(ctx)?;
    let c2 = ctx.scalar_req("c2")?;
    let mut cfg = StabilityConfig { seed: ctx.seed, ..Default::default() };
    if let Some(b) = ctx.budget {
        cfg.max_evals = b;
    }
    let cert = match certify_stability(&frame, &c2, &cfg) {
        Ok(c) => c,
        Err(e @ StabilityError::BudgetExceeded { .. }) => return Err(CliError::Budget(e.to_string())),
        Err(e) => return Err(input(e)),
    };
    // flat-level rank table r(I, J) with I, J disjoint
    let k = frame.flats().len();
    let mut ranks = Vec::new();
    for im in 0..1usize << k {
        for jm in 0..1usize << k {
            if im & jm != 0 || (im == 0 && jm == 0) {
                continue;
            }
            let is: BTreeSet<usize> = (0..k).filter(|b| im >> b & 1 == 1).collect();
            let js: Vec<usize> = (0..k).filter(|b| jm >> b & 1 == 1).collect();
            let idx = IndexPair::new(frame.slots_of(&is), js.iter().copied());
            let r = match rank_r(&frame, &idx, &cfg).map_err(input)? {
                RankOutcome::Constant { rank, .. } => json!(rank),
                RankOutcome::Inconsistent { .. } => json!("inconsistent"),
            };
            ranks.push(json!({"I": is, "J": js, "rank": r}));
        }
    }
    let json = json!({
        "frame": name,
        "c2": s(&cert.c2),
        "certified": cert.certified,
        "violation": cert.violation.as_ref().map(|v| v.to_string()),
        "index_pairs": cert.pairs,
        "evaluations": cert.evaluations,
        "ranks": ranks,
    });
    Ok(Report { json, table: None, passed: cert.certified })
}

fn beck(ctx: &Ctx) -> Result<Report, CliError> {
    let sc = ctx.scene;
    let (name, pts) = sc.point_set(ctx.name("points")?.as_deref()).map_err(input)?;
    let x = PointConfig::new(sc.ambient_dim, pts.clone()).map_err(input)?;
    if sc.ambient_dim < 2 {
        return Err(input("beck needs ambient_dim >= 2"));
    }
    let budget = ctx.budget.unwrap_or(DEFAULT_BUDGET);
    let eps = ctx.f64_or("epsilon", 0.1)?;
    let d = dichotomy_report(&x, eps, budget).map_err(input)?;
    let hyper = match enumerate_spanned_flats(&x, sc.ambient_dim - 1, budget) {
        Ok(h) => Some(h.len()),
        Err(flatbeck::beck::BeckError::BudgetExceeded { .. }) => None,
        Err(e) => return Err(input(e)),
    };
    let json = json!({
        "points": name,
        "n_points": x.len(),
        "epsilon": eps,
        "needed": d.needed,
        "best_cover": d.best_cover,
        "family": d.family.as_ref().map(|f| f.iter().map(flat).collect::<Vec<_>>()),
        "branch": if d.family.is_some() { "concentrated" } else { "many hyperplanes" },
        "hyperplanes": hyper,
        "ratio": hyper.map(|h| h as f64 / (x.len() as f64).powi(sc.ambient_dim as i32)),
        "partial": d.partial || hyper.is_none(),
    });
    if d.partial || hyper.is_none() {
        return Err(CliError::Budget(format!("enumeration over {} points exceeds budget {budget}; partial report: {json}", x.len())));
    }
    Ok(Report { json, table: None, passed: true })
}

fn build_graph(ctx: &Ctx) -> Result<(String, ThinGraph), CliError> {
    let sc = ctx.scene;
    let (name, spec): (&str, &GraphSpec) = sc.graph(ctx.name("graph")?.as_deref()).map_err(input)?;
    let measures: Vec<DiscreteMeasure> = spec.measures.iter().map(|m| sc.measures[m].clone()).collect();
    let sigma = match spec.sigma {
        Some(x) => x,
        None => ctx.f64_req("sigma")?,
    };
    let big_k = match spec.big_k {
        Some(x) => x,
        None => ctx.f64_req("K")?,
    };
    let c = match spec.c {
        Some(x) => x,
        None => ctx.f64_or("c", 0.0)?,
    };
    let g = match &spec.tuples {
        Some(t) => ThinGraph::new(measures, t.clone(), sigma, big_k, c),
        None => ThinGraph::full(measures, sigma, big_k, c),
    }
    .map_err(input)?;
    Ok((name.to_owned(), g))
}

fn thin_json(r: &ThinReport) -> Value {
    json!({
        "passed": r.passed,
        "density": s(&r.density),
        "density_ok": r.density_ok,
        "checked": r.checked,
        "exhaustive": r.exhaustive,
        "worst": r.worst.as_ref().map(|w| json!({
            "tuple": w.tuple, "j": w.j, "scale": s(&w.scale), "mass": s(&w.mass), "bound": w.bound, "ratio": w.ratio,
        })),
    })
}

fn thin_table(r: &ThinReport) -> String {
    csv(r.rows.iter().map(|x| (x.scale.clone(), x.max_mass.clone(), x.bound, x.ratio)))
}

fn thin_err(e: ThinError) -> CliError {
    input(e)
}

fn thin_verify(ctx: &Ctx) -> Result<Report, CliError> {
    let (name, g) = build_graph(ctx)?;
    let scales = ctx.scales_for(g.measures())?;
    let cfg = ThinConfig { max_tuples: ctx.budget.unwrap_or(ThinConfig::default().max_tuples), seed: ctx.seed };
    let planes = verify_thin_planes(&g, &scales, &cfg).map_err(thin_err)?;
    let tubes = if ctx.scene.params.bool("tubes").map_err(input)?.unwrap_or(false) {
        Some(verify_thin_tubes(&g, &scales).map_err(thin_err)?)
    } else {
        None
    };
    let passed = planes.passed && tubes.as_ref().is_none_or(|t| t.passed);
    let json = json!({
        "graph": name,
        "sigma": g.sigma,
        "K": g.big_k,
        "c": g.c,
        "tuples": g.len(),
        "scales": scales.iter().map(s).collect::<Vec<_>>(),
        "planes": thin_json(&planes),
        "tubes": tubes.as_ref().map(thin_json),
    });
    Ok(Report { json, table: Some(thin_table(&planes)), passed })
}

fn thin_prune(ctx: &Ctx) -> Result<Report, CliError> {
    let (name, g) = build_graph(ctx)?;
    let scales = ctx.scales_for(g.measures())?;
    let eps = ctx.f64_req("epsilon")?;
    let a_cover = ctx.f64_or("a_cover", 1.0)?;
    let (out, rep) = match prune_planes(&g, eps, a_cover, &scales) {
        Ok(x) => x,
        Err(ThinError::Budget { removed, budget }) => {
            let json = json!({"graph": name, "verdict": "fail", "clause": format!("removed mass {removed} exceeds budget {budget}")});
            return Ok(Report { json, table: None, passed: false });
        }
        Err(e) => return Err(thin_err(e)),
    };
    let cfg = ThinConfig { max_tuples: ctx.budget.unwrap_or(ThinConfig::default().max_tuples), seed: ctx.seed };
    let check = verify_thin_planes(&out, &scales, &cfg).map_err(thin_err)?;
    let json = json!({
        "graph": name,
        "epsilon": eps,
        "a_cover": a_cover,
        "c1": rep.c1,
        "removed": rep.removed,
        "removed_mass": s(&rep.removed_mass),
        "output": {"sigma": out.sigma, "K": out.big_k, "c": out.c, "tuples": out.len()},
        "verification": thin_json(&check),
    });
    Ok(Report { json, table: Some(thin_table(&check)), passed: check.passed })
}

fn project(ctx: &Ctx) -> Result<Report, CliError> {
    let sc = ctx.scene;
    let (name, mu) = sc.measure(ctx.name("measure")?.as_deref()).map_err(input)?;
    let centre_name = ctx.name("centre")?.ok_or_else(|| input("parameters.centre: missing"))?;
    let screen_name = ctx.name("screen")?.ok_or_else(|| input("parameters.screen: missing"))?;
    let centre = sc.flat(&centre_name, "parameters.centre").map_err(input)?;
    let screen = sc.flat(&screen_name, "parameters.screen").map_err(input)?;
    let image = pushforward(mu, sc.ambient_dim, |v| join_meet(centre, screen, v)).map_err(input)?;
    let mut json = json!({
        "measure": name,
        "centre": flat(centre),
        "screen": flat(screen),
        "image": image.atoms().iter().map(|a| json!({"point": vector(&a.point), "weight": s(&a.weight)})).collect::<Vec<_>>(),
    });
    let mut passed = true;
    if let (Some(w), Some(tau)) = (sc.params.scalar("w").map_err(input)?, sc.params.scalar("tau").map_err(input)?) {
        let mcfg = ModulusConfig { seed: ctx.seed, ..Default::default() };
        let host = match ctx.name("host")? {
            Some(h) => sc.flat(&h, "parameters.host").map_err(input)?.clone(),
            None => AffineFlat::full(sc.ambient_dim),
        };
        let before = irreducibility_modulus(mu, &host, &w, &mcfg).map_err(input)?;
        let image_w = ctx.scalar_or("image_w", w.clone())?;
        let after = irreducibility_modulus(&image, screen, &image_w, &mcfg).map_err(input)?;
        let limit = &tau * Scalar::from_integer(2.into());
        passed = after.tau <= limit;
        json["modulus"] = json!({
            "source": s(&before.tau),
            "image": s(&after.tau),
            "limit": s(&limit),
            "image_w": s(&image_w),
            "witness": after.witness.as_ref().map(flat),
        });
    }
    Ok(Report { json, table: None, passed })
}

fn pushforward_dim(ctx: &Ctx) -> Result<Report, CliError> {
    let (name, g) = build_graph(ctx)?;
    let scales = ctx.scales_for(g.measures())?;
    let fit = pushforward_frostman(&g, &scales).map_err(thin_err)?;
    let sigmas = g
        .measures()
        .iter()
        .map(|m| frostman_fit(m, &scales).map(|f| f.s))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(input)?;
    let sigma = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let rows = fit.table.iter().map(|r| {
        let bound = fit.c * to_f64(&r.scale).powf(fit.s);
        (r.scale.clone(), r.max_mass.clone(), bound, to_f64(&r.max_mass) / bound)
    });
    let table = csv(rows);
    let json = json!({
        "graph": name,
        "k": g.k(),
        "tuples": fit.atoms,
        "sigma_fits": sigmas,
        "sigma": sigma,
        "expected": (g.k() as f64 + 1.0) * sigma,
        "s_prime": fit.s,
        "c_prime": fit.c,
        "scales": scales.iter().map(s).collect::<Vec<_>>(),
    });
    Ok(Report { json, table: Some(table), passed: true })
}
