use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use critfield::census::{census_realization, euler_characteristic, CensusConfig, Cube, Level};
use critfield::chaos::{chaotic_variance_profile, limit_variance_convolution, ChaosExpansion, CONVOLUTION_ORDER_LIMIT};
use critfield::field::UniformAxis;
use critfield::harness::{replicate_seed, run_replications, write_results};
use critfield::kac_rice::{expected_count, second_factorial_moment, IndexSel, MomentRecord};
use critfield::{synthesize, Error};

use crate::config::RunConfig;
use crate::{Command, Global};

/// Retries allowed per seed in the Euler audit when a draw is degenerate.
const AUDIT_RETRIES: usize = 3;

pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::CensusIntegrity { .. }) => 3,
        _ => 1,
    }
}

pub fn run(g: &Global, cmd: &Command) -> Result<u8> {
    let path = g.config.as_deref().context("--config <PATH> is required (see --help)")?;
    let cfg = RunConfig::load(path)?;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let started = unix_time();
    let (code, summary) = match cmd {
        Command::CheckModel => check_model(&cfg)?,
        Command::Simulate { atoms, grid, t } => simulate(g, &cfg, *atoms, *grid, *t)?,
        Command::Census { t, levels } => census(g, &cfg, *t, levels)?,
        Command::Kacrice {
            t,
            level,
            index,
            n_mc,
            second_v,
            box_sides,
            n_mc_lag,
            n_quad,
        } => kacrice(
            g,
            &cfg,
            *t,
            *level,
            index,
            *n_mc,
            second_v.as_deref(),
            box_sides.as_deref(),
            *n_mc_lag,
            *n_quad,
        )?,
        Command::Chaos {
            level,
            q_max,
            n_mc,
            alpha,
        } => chaos(g, &cfg, *level, *q_max, *n_mc, alpha.clone())?,
        Command::Clt { replications } => clt(g, &cfg, *replications)?,
        Command::EulerAudit { seeds, t } => euler_audit(g, &cfg, *seeds, t)?,
    };
    if !matches!(cmd, Command::CheckModel) {
        write_sidecar(&g.out, started)?;
    }
    if g.json {
        println!("{}", serde_json::to_string(&summary)?);
    }
    Ok(code)
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

// Timestamps live here only, so every other output is reproducible.
fn write_sidecar(out: &Path, started: u64) -> Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    let text = format!("argv: {}\nstarted: {started}\nfinished: {}\n", argv.join(" "), unix_time());
    fs::write(out.join("run.log"), text)?;
    Ok(())
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn check_model(cfg: &RunConfig) -> Result<(u8, Value)> {
    let report = cfg.model.check_assumptions();
    for (name, v) in report.entries() {
        eprintln!(
            "({name}) {}  statistic {:.6e}  {}",
            if v.passed { "pass" } else { "FAIL" },
            v.statistic,
            v.detail
        );
    }
    let ok = report.all_passed();
    Ok((if ok { 0 } else { 2 }, json!({ "passed": ok, "assumptions": report })))
}

fn simulate(g: &Global, cfg: &RunConfig, atoms: Option<usize>, grid: Option<usize>, t: f64) -> Result<(u8, Value)> {
    let seed = cfg.seed(g.seed);
    let real = synthesize(&cfg.model, atoms.unwrap_or(cfg.atoms()), seed)?;
    fs::create_dir_all(&g.out)?;
    write_json(&g.out.join("realization.json"), &real.to_atom_dump())?;
    real.write_atoms(BufWriter::new(File::create(g.out.join("atoms.bin"))?))?;
    if let Some(n) = grid {
        let d = real.dim();
        if d > 2 {
            bail!("grid output supports d <= 2");
        }
        if n < 2 {
            bail!("--grid needs at least 2 points per axis");
        }
        let axis = UniformAxis::spanning(-t, t, n);
        let axes = vec![axis; d];
        let values = real.values_on_grid(&axes);
        let mut wr = csv::Writer::from_path(g.out.join("grid.csv"))?;
        let mut header: Vec<String> = (1..=d).map(|i| format!("t{i}")).collect();
        header.push("value".into());
        wr.write_record(&header)?;
        for (k, v) in values.iter().enumerate() {
            let mut rec = Vec::with_capacity(d + 1);
            let mut rem = k;
            let mut coords = vec![0.0; d];
            for p in (0..d).rev() {
                coords[p] = axis.point(rem % n);
                rem /= n;
            }
            rec.extend(coords.iter().map(|c| c.to_string()));
            rec.push(v.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
    }
    eprintln!("seed {seed}: {} atoms written to {}", real.atoms(), g.out.display());
    Ok((0, json!({ "seed": seed, "dim": real.dim(), "atoms": real.atoms() })))
}

fn census(g: &Global, cfg: &RunConfig, t: Option<f64>, levels: &[Level]) -> Result<(u8, Value)> {
    let seed = cfg.seed(g.seed);
    let t = t.or(cfg.largest_t()).context("no --t and no t_ladder in the config")?;
    let levels = if levels.is_empty() {
        cfg.levels.clone().unwrap_or_else(|| vec![Level::NegInf])
    } else {
        levels.to_vec()
    };
    let real = synthesize(&cfg.model, cfg.atoms(), seed)?;
    let cube = Cube::new(t, real.dim())?;
    let (result, points) = census_realization(&real, &cube, &levels, &CensusConfig::for_model(&cfg.model)?)?;
    fs::create_dir_all(&g.out)?;
    write_json(&g.out.join("census.json"), &result)?;
    let d = real.dim();
    let mut wr = csv::Writer::from_path(g.out.join("points.csv"))?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("t{i}")).collect();
    header.extend(["value".into(), "index".into(), "grad_residual".into()]);
    header.extend((1..=d).map(|i| format!("eig{i}")));
    wr.write_record(&header)?;
    for p in &points {
        let mut rec: Vec<String> = p.location.iter().map(|x| x.to_string()).collect();
        rec.extend([p.value.to_string(), p.index.to_string(), p.grad_residual.to_string()]);
        rec.extend(p.hess_eigs.iter().map(|x| x.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    for (level, counts) in result.levels.iter().zip(&result.counts_by_level) {
        eprintln!("u = {level}: Crt = {counts:?}");
    }
    eprintln!("chi = {}, {} interior points", result.chi, points.len());
    Ok((0, serde_json::to_value(&result)?))
}

#[allow(clippy::too_many_arguments)]
fn kacrice(
    g: &Global,
    cfg: &RunConfig,
    t: f64,
    level: Level,
    index: &str,
    n_mc: usize,
    second_v: Option<&[f64]>,
    box_sides: Option<&[f64]>,
    n_mc_lag: usize,
    n_quad: usize,
) -> Result<(u8, Value)> {
    let seed = cfg.seed(g.seed);
    let model = &cfg.model;
    let d = model.dim();
    let sel = match index {
        "all" => IndexSel::All,
        k => IndexSel::Only(k.parse().with_context(|| format!("bad --index '{k}'"))?),
    };
    let cube = Cube::new(t, d)?;
    let est = expected_count(model, level, sel, &cube, n_mc, seed)?;
    let mut records = vec![MomentRecord::new(
        "expected_count",
        model,
        json!({ "T": t, "level": level, "index": index, "n_mc": n_mc, "seed": seed }),
        &est,
    )?];
    eprintln!("E[Crt] = {:.6} +/- {:.2e}", est.mean, est.stderr);
    match (second_v, box_sides) {
        (Some(v), Some(sides)) => {
            let m2 = second_factorial_moment(model, v, sides, n_mc_lag, n_quad, seed)?;
            eprintln!("E[N(N-1)] = {:.6e} +/- {:.2e}", m2.mean, m2.stderr);
            records.push(MomentRecord::new(
                "second_factorial_moment",
                model,
                json!({ "v": v, "box": sides, "n_mc": n_mc_lag, "n_quad": n_quad, "seed": seed }),
                &m2,
            )?);
        }
        (None, None) => {}
        _ => bail!("--second-v and --box must be given together"),
    }
    fs::create_dir_all(&g.out)?;
    write_json(&g.out.join("moments.json"), &records)?;
    Ok((0, serde_json::to_value(&records)?))
}

fn chaos(g: &Global, cfg: &RunConfig, level: Level, q_max: usize, n_mc: usize, alpha: Option<Vec<f64>>) -> Result<(u8, Value)> {
    let seed = cfg.seed(g.seed);
    let model = &cfg.model;
    let d = model.dim();
    let mut exp = ChaosExpansion::estimate(model, level, q_max, n_mc, seed)?;
    if let Some(a) = alpha {
        exp = exp.with_alpha(a)?;
    }
    fs::create_dir_all(&g.out)?;
    exp.write_csv(BufWriter::new(File::create(g.out.join("coefficients.csv"))?))?;
    let ranks: Vec<usize> = (0..=d).map(|k| exp.hermite_rank(k)).collect();
    let (terms, note) = match chaotic_variance_profile(model, &exp) {
        Ok(v) => (Some(v), None),
        Err(e @ Error::Capability(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let convolution: Option<Vec<f64>> = if d == 1 {
        Some(
            (1..=q_max.min(CONVOLUTION_ORDER_LIMIT))
                .map(|q| limit_variance_convolution(model, &exp, q))
                .collect::<critfield::Result<_>>()?,
        )
    } else {
        None
    };
    let partial: Option<Vec<f64>> = terms.as_ref().map(|v| {
        v.iter()
            .scan(0.0, |s, x| {
                *s += x;
                Some(*s)
            })
            .collect()
    });
    if let Some(v) = &terms {
        for (q, x) in v.iter().enumerate() {
            eprintln!("V_{} = {x:.6e}", q + 1);
        }
    }
    let doc = json!({
        "level": level,
        "alpha": exp.alpha(),
        "q_max": q_max,
        "n_mc": n_mc,
        "seed": seed,
        "hermite_rank": ranks,
        "chaotic_variance": terms,
        "partial_sums": partial,
        "convolution": convolution,
        "note": note,
    });
    write_json(&g.out.join("variance.json"), &doc)?;
    Ok((0, doc))
}

fn clt(g: &Global, cfg: &RunConfig, replications: Option<usize>) -> Result<(u8, Value)> {
    let exp = cfg.experiment(g.seed, replications)?;
    let result = run_replications(&exp)?;
    write_results(&result, &g.out)?;
    eprintln!(
        "{} replications, {} replacement draws, results in {}",
        result.replications(),
        result.replacements(),
        g.out.display()
    );
    let diag = critfield::harness::diagnostics_json(&result);
    Ok((0, json!({ "replications": result.replications(), "diagnostics": diag })))
}

fn euler_audit(g: &Global, cfg: &RunConfig, seeds: usize, t: &[f64]) -> Result<(u8, Value)> {
    let master = cfg.seed(g.seed);
    let ladder: Vec<f64> = if t.is_empty() {
        cfg.t_ladder.clone().context("no --t and no t_ladder in the config")?
    } else {
        t.to_vec()
    };
    let d = cfg.model.dim();
    let cubes = ladder.iter().map(|&t| Cube::new(t, d)).collect::<critfield::Result<Vec<_>>>()?;
    let rows: Vec<Result<Value>> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let mut replaced = Vec::new();
            loop {
                let seed = replicate_seed(master, i, replaced.len());
                let real = synthesize(&cfg.model, cfg.atoms(), seed)?;
                let mut chis = Vec::with_capacity(cubes.len());
                let mut degenerate = None;
                for cube in &cubes {
                    match euler_characteristic(&real, cube) {
                        Ok(c) => chis.push(json!(c)),
                        Err(Error::CensusIntegrity { chi }) => chis.push(json!(chi)),
                        Err(e @ (Error::BoundaryDegeneracy { .. } | Error::DegenerateHessian { .. })) => {
                            degenerate = Some(e);
                            break;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                match degenerate {
                    None => return Ok(json!({ "replicate": i, "seed": seed, "replaced": replaced, "chi": chis })),
                    Some(e) if replaced.len() < AUDIT_RETRIES => {
                        log::warn!("seed {seed} discarded ({e})");
                        replaced.push(seed);
                    }
                    Some(e) => return Err(e.into()),
                }
            }
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let good = rows
        .iter()
        .filter(|r| r["chi"].as_array().is_some_and(|c| c.iter().all(|x| x == 1)))
        .count();
    let redraws: usize = rows.iter().map(|r| r["replaced"].as_array().map_or(0, |a| a.len())).sum();
    let doc = json!({
        "T": ladder,
        "seeds": seeds,
        "chi_one": good,
        "redraws": redraws,
        "records": rows,
    });
    fs::create_dir_all(&g.out)?;
    write_json(&g.out.join("euler_audit.json"), &doc)?;
    eprintln!("{good}/{seeds} seeds with chi = 1 on every box ({redraws} re-draws)");
    Ok((if good == seeds { 0 } else { 3 }, doc))
}
