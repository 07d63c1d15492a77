//! Flat `key = value` study files, one key per line, `#` comments.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;

use super::problem::{ProblemKind, ProblemSpec};
use super::study::{ReferenceKind, StudyConfig};
use crate::collocation::{NodeFamily, QDeltaKind};
use crate::error::{Error, Result};
use crate::imex::SolverTolerances;
use crate::sdc::{FinalUpdate, InitialGuess, SdcConfig};

pub type Settings = BTreeMap<String, String>;

const KEYS: [&str; 22] = [
    "problem", "M", "K", "family", "qdelta_imp", "qdelta_exp", "guess", "final", "dts", "t_end", "out",
    "reference", "dt_ref", "cache_dir", "tol", "cells", "layers", "length", "speed", "sound_speed",
    "lambda_fast", "lambda_slow",
];

/// Default solver tolerance of a study; loose tolerances would swamp the
/// time-discretisation error being measured.
pub const STUDY_TOLERANCE: f64 = 1e-12;

pub fn parse_key_values(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::config(format!("line {}: unknown key {key:?}", n + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn get<T: FromStr>(settings: &Settings, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    settings
        .get(key)
        .map(|v| v.parse::<T>().map_err(|e| Error::config(format!("{key} = {v:?}: {e}"))))
        .transpose()
}

fn parse_guess(s: &str) -> Result<InitialGuess> {
    match s {
        "copy" => Ok(InitialGuess::Copy),
        "low-order" => Ok(InitialGuess::LowOrder),
        _ => Err(Error::config(format!("unknown initial guess {s:?}"))),
    }
}

fn parse_final(s: &str) -> Result<FinalUpdate> {
    match s {
        "collocation" => Ok(FinalUpdate::Collocation),
        "copy-node" => Ok(FinalUpdate::CopyLastNode),
        _ => Err(Error::config(format!("unknown final update {s:?}"))),
    }
}

pub fn parse_dts(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::config(format!("dts entry {v:?}: {e}"))))
        .collect()
}

pub fn sdc_from_settings(settings: &Settings, default_tol: f64) -> Result<SdcConfig> {
    let m: usize = get(settings, "M")?.ok_or_else(|| Error::config("M is required"))?;
    let k: usize = get(settings, "K")?.ok_or_else(|| Error::config("K is required"))?;
    let family: NodeFamily = get(settings, "family")?.unwrap_or(NodeFamily::GaussLegendre);
    let imp: QDeltaKind = get(settings, "qdelta_imp")?.unwrap_or(QDeltaKind::Lu);
    let exp: QDeltaKind = get(settings, "qdelta_exp")?.unwrap_or(QDeltaKind::ExplicitEuler);
    let guess = settings.get("guess").map(|s| parse_guess(s)).transpose()?.unwrap_or(InitialGuess::Copy);
    let fin = settings.get("final").map(|s| parse_final(s)).transpose()?.unwrap_or(FinalUpdate::Collocation);
    let tol: f64 = get(settings, "tol")?.unwrap_or(default_tol);
    Ok(SdcConfig::new(m, k)
        .with_family(family)
        .with_preconditioners(imp, exp)?
        .with_initial_guess(guess)
        .with_final_update(fin)
        .with_tolerances(SolverTolerances::uniform(tol).with_max_krylov(2000)))
}

pub fn problem_from_settings(settings: &Settings) -> Result<ProblemSpec> {
    let kind: ProblemKind = get(settings, "problem")?.ok_or_else(|| Error::config("problem is required"))?;
    let mut spec = ProblemSpec::new(kind);
    if let Some(v) = get::<Complex64>(settings, "lambda_fast")? {
        spec.lambda_fast = v;
    }
    if let Some(v) = get::<Complex64>(settings, "lambda_slow")? {
        spec.lambda_slow = v;
    }
    spec.cells = get(settings, "cells")?.unwrap_or(spec.cells);
    spec.layers = get(settings, "layers")?.unwrap_or(spec.layers);
    spec.length = get(settings, "length")?.unwrap_or(spec.length);
    spec.speed = get(settings, "speed")?.unwrap_or(spec.speed);
    spec.sound_speed = get(settings, "sound_speed")?.unwrap_or(spec.sound_speed);
    Ok(spec)
}

pub fn study_from_settings(settings: &Settings) -> Result<StudyConfig> {
    let problem = problem_from_settings(settings)?;
    let sdc = sdc_from_settings(settings, STUDY_TOLERANCE)?;
    let (default_dts, default_t_end) = problem.kind.default_schedule();
    let dt_list = settings.get("dts").map(|s| parse_dts(s)).transpose()?.unwrap_or(default_dts);
    let t_end = get(settings, "t_end")?.unwrap_or(default_t_end);
    let dt_min = dt_list.iter().copied().fold(f64::INFINITY, f64::min);
    let default_ref = match problem.kind {
        ProblemKind::Gravity2d => 0.05,
        _ => dt_min / 64.0,
    };
    let dt_ref: f64 = get(settings, "dt_ref")?.unwrap_or(default_ref);
    let reference = match settings.get("reference").map(String::as_str) {
        None if problem.kind == ProblemKind::Dahlquist => ReferenceKind::Analytic,
        None | Some("ssprk3") => ReferenceKind::Ssprk3 { dt_ref },
        Some("analytic") => ReferenceKind::Analytic,
        Some("self") => ReferenceKind::SelfFinest,
        Some(other) => return Err(Error::config(format!("unknown reference {other:?}"))),
    };
    let config = StudyConfig {
        problem,
        sdc,
        dt_list,
        t_end,
        reference,
        output_path: settings.get("out").map(PathBuf::from),
        cache_dir: settings.get("cache_dir").map(PathBuf::from),
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_with_comments() {
        let text = "# study\nproblem = advection1d\nM = 3 # nodes\nK=5\n\ndts = 1000, 500, 250\nqdelta_exp = EE\n";
        let s = parse_key_values(text).unwrap();
        let cfg = study_from_settings(&s).unwrap();
        assert_eq!(cfg.sdc.nodes, 3);
        assert_eq!(cfg.sdc.sweeps, 5);
        assert_eq!(cfg.dt_list, vec![1000.0, 500.0, 250.0]);
        assert_eq!(cfg.reference, ReferenceKind::Ssprk3 { dt_ref: 250.0 / 64.0 });
        assert_eq!(cfg.t_end, 50_000.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(parse_key_values("nodes = 3").is_err());
        assert!(parse_key_values("problem advection1d").is_err());
    }

    #[test]
    fn rejects_invalid_studies() {
        let base = "problem = dahlquist\nM = 2\nK = 3\n";
        let bad = [
            "dts = 0.1, 0.2, 0.05",
            "dts = 0.2, 0.1",
            "dts = 0.3, 0.2, 0.1",
            "qdelta_imp = EE",
            "final = copy-node",
            "reference = analytic\nproblem = gravity2d",
        ];
        for extra in bad {
            let s = parse_key_values(&format!("{base}{extra}\n")).unwrap();
            assert!(study_from_settings(&s).is_err(), "{extra}");
        }
        let s = parse_key_values(&format!("{base}family = radau-right\nfinal = copy-node\n")).unwrap();
        assert!(study_from_settings(&s).is_ok());
    }
}
