use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::{clt_diagnostics, variance_scaling, ExperimentResult};
use crate::error::Result;

fn or_error<T: serde::Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Diagnostics for every configured `(level, alpha)`: variance scaling along
/// the ladder and CLT diagnostics at the largest `T`.
pub fn diagnostics_json(result: &ExperimentResult) -> Value {
    let t_max = *result.config.t_ladder.last().expect("validated ladder");
    let mut entries = Vec::new();
    for &level in &result.config.levels {
        for alpha in &result.config.alphas {
            entries.push(json!({
                "level": level,
                "alpha": alpha,
                "variance_scaling": or_error(variance_scaling(result, alpha, level)),
                "clt": or_error(clt_diagnostics(result, alpha, t_max, level)),
            }));
        }
    }
    json!({ "replacements": result.replacements(), "entries": entries })
}

/// Writes `config.toml`, `counts_T<T>.csv` per ladder entry,
/// `aggregate.json` and `diagnostics.json` into `dir`.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), result.config.to_toml()?)?;
    let d = result.dim();
    for (ti, &t) in result.config.t_ladder.iter().enumerate() {
        let mut wr = csv::Writer::from_path(dir.join(format!("counts_T{t}.csv")))?;
        let mut header = vec!["replicate".to_string(), "seed".into(), "level".into()];
        header.extend((0..=d).map(|k| format!("crt{k}")));
        header.push("chi".into());
        wr.write_record(&header)?;
        for r in &result.records {
            let c = &r.censuses[ti];
            for (li, level) in c.levels.iter().enumerate() {
                let mut rec = vec![r.replicate.to_string(), r.seed.to_string(), level.to_string()];
                rec.extend(c.counts_by_level[li].iter().map(|v| v.to_string()));
                rec.push(c.chi.to_string());
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
    }
    let aggregate = json!({
        "replications": result.replications(),
        "replaced_seeds": result.records.iter().flat_map(|r| r.replaced.clone()).collect::<Vec<_>>(),
        "aggregates": result.aggregates(),
    });
    fs::write(dir.join("aggregate.json"), serde_json::to_string_pretty(&aggregate)?)?;
    fs::write(
        dir.join("diagnostics.json"),
        serde_json::to_string_pretty(&diagnostics_json(result))?,
    )?;
    Ok(())
}
