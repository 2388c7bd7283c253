use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use gasgate::data::{load_csv, write_csv, Dataset};
use gasgate::eval::{choose_ratio, default_gamma_grid, penalty_sweep, repeated_cv, write_fold_rows, ConfusionCounts};
use gasgate::interval::{explosion_interval, probability_profile, IntervalSettings};
use gasgate::model::{train, Classifier, FittedLogistic, LearnerConfig};
use gasgate::synth::{generate, GeneratorConfig, OracleRegion};

use crate::args::{
    pick, required_path, usage, Command, ConfigFile, CvArgs, GenArgs, IntervalsArgs, PredictArgs, SweepArgs, TrainArgs,
};

const DEFAULT_FOLDS: usize = 5;
const DEFAULT_REPEATS: usize = 10;
const DEFAULT_BASE_W2: f64 = 1.0;
const DEFAULT_O2_LEVELS: [f64; 4] = [15.0, 16.0, 18.0, 20.0];

pub fn run(command: &Command, cfg: &ConfigFile) -> anyhow::Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a, cfg),
        Command::Train(a) => cmd_train(a, cfg),
        Command::Predict(a) => cmd_predict(a, cfg),
        Command::Cv(a) => cmd_cv(a, cfg),
        Command::Sweep(a) => cmd_sweep(a, cfg),
        Command::Intervals(a) => cmd_intervals(a, cfg),
    }
}

/// Writes through a temporary file in the target directory, then renames
/// it into place so readers never see a partial file.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(())
}

/// Atomic write to `path`, or stdout when no path is given.
fn write_report(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> anyhow::Result<()> {
    match path {
        Some(p) => write_atomic(p, body),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn load_data(path: &Path) -> anyhow::Result<Dataset> {
    Ok(load_csv(path)?)
}

fn load_model(path: &Path) -> anyhow::Result<Classifier> {
    let file = File::open(path).with_context(|| format!("cannot open model file {}", path.display()))?;
    Classifier::read_from(io::BufReader::new(file)).with_context(|| format!("invalid model file {}", path.display()))
}

fn cmd_gen(a: &GenArgs, cfg: &ConfigFile) -> anyhow::Result<()> {
    let out = required_path(&a.out, &cfg.out, "out")?;
    let defaults = GeneratorConfig::default();
    let natural = a.natural_balance || cfg.natural_balance.unwrap_or(false);
    let positive_fraction = if natural {
        None
    } else {
        Some(pick(&a.positive_fraction, &cfg.positive_fraction).unwrap_or(0.78))
    };
    let o2_band = match pick(&a.o2_band, &cfg.o2_band) {
        None => None,
        Some(v) if v.len() == 2 => Some((v[0], v[1])),
        Some(v) => return Err(usage(format!("--o2-band takes LOW,HIGH, got {} values", v.len())).into()),
    };
    let config = GeneratorConfig {
        n: pick(&a.n, &cfg.n).unwrap_or(defaults.n),
        seed: a.seed.resolve(cfg)?,
        noise: pick(&a.noise, &cfg.noise).unwrap_or(defaults.noise),
        positive_fraction,
        o2_band,
        ..defaults
    };
    let region = match pick(&a.region, &cfg.region) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read region {}", path.display()))?;
            serde_json::from_str::<OracleRegion>(&text).with_context(|| format!("invalid region {}", path.display()))?
        }
        None => OracleRegion::default(),
    };
    config.validate()?;
    region.validate()?;

    let data = generate(&region, &config)?;
    write_atomic(&out, |w| write_csv(&data, w))?;
    let (pos, neg) = data.class_counts();
    println!(
        "wrote {} samples to {}: {} exploded ({:.1}%), {} not exploded",
        data.len(),
        out.display(),
        pos,
        100.0 * pos as f64 / data.len() as f64,
        neg
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs, cfg: &ConfigFile) -> anyhow::Result<()> {
    let data_path = required_path(&a.data, &cfg.data, "data")?;
    let out = required_path(&a.out, &cfg.out, "out")?;
    let features = a.features.resolve(cfg)?;
    let seed = a.seed.resolve(cfg)?;
    let learner = a.learner.resolve(cfg, features.len(), seed)?;

    let data = load_data(&data_path)?;
    let model = train(&data, &features, &learner)?;
    if !model.converged() {
        log::warn!("{} fit stopped at its iteration cap before converging", model.kind());
    }
    let mut counts = ConfusionCounts::default();
    for s in data.samples() {
        counts.record(s.exploded, model.predict_exploded(s)?);
    }
    write_atomic(&out, |w| {
        let text = model.to_json().map_err(io::Error::other)?;
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })?;
    println!("trained {} model on {} samples, wrote {}", model.kind(), data.len(), out.display());
    println!(
        "training accuracy: {:.2}% (tp={} fp={} tn={} fn={})",
        100.0 * counts.accuracy(),
        counts.tp,
        counts.fp,
        counts.tn,
        counts.fn_
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs, cfg: &ConfigFile) -> anyhow::Result<()> {
    let model_path = required_path(&a.model_file, &cfg.model_file, "model-file")?;
    let data_path = required_path(&a.data, &cfg.data, "data")?;
    let model = load_model(&model_path)?;
    let data = load_data(&data_path)?;

    let mut rows = Vec::with_capacity(data.len());
    for (i, s) in data.samples().iter().enumerate() {
        let x = model.normalization().apply(s).with_context(|| format!("row {i}"))?;
        let label = model.predict_label(&x)?;
        rows.push((i, label, model.probability(&x)?));
    }
    let logistic = matches!(model, Classifier::Logistic(_));
    write_report(pick(&a.out, &cfg.out).as_deref(), |w| {
        writeln!(w, "{}", if logistic { "row,prediction,probability" } else { "row,prediction" })?;
        for (i, label, p) in &rows {
            match p {
                Some(p) => writeln!(w, "{i},{label},{p:?}")?,
                None => writeln!(w, "{i},{label}")?,
            }
        }
        Ok(())
    })
}

fn cmd_cv(a: &CvArgs, cfg: &ConfigFile) -> anyhow::Result<()> {
    let data_path = required_path(&a.data, &cfg.data, "data")?;
    let features = a.features.resolve(cfg)?;
    let seed = a.seed.resolve(cfg)?;
    let learner = a.learner.resolve(cfg, features.len(), seed)?;
    let folds = pick(&a.folds, &cfg.folds).unwrap_or(DEFAULT_FOLDS);
    let repeats = pick(&a.repeats, &cfg.repeats).unwrap_or(DEFAULT_REPEATS);

    let data = load_data(&data_path)?;
    let result = repeated_cv(&data, &features, &learner, folds, repeats, seed)?;

    let name = match learner {
        LearnerConfig::Svm(_) => "svm",
        LearnerConfig::Logistic(_) => "logistic",
    };
    println!("{name}: {folds}-fold cross-validation, {repeats} repeat(s), {} samples", data.len());
    if repeats == 1 {
        println!("{}", result.reports[0]);
    } else {
        println!("{result}");
    }
    if let Some(path) = pick(&a.out, &cfg.out) {
        write_atomic(&path, |w| result.write_summary_csv(w))?;
    }
    if let Some(path) = pick(&a.folds_out, &cfg.folds_out) {
        write_atomic(&path, |w| write_fold_rows(w, &result.reports))?;
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, cfg: &ConfigFile) -> anyhow::Result<()> {
    let data_path = required_path(&a.data, &cfg.data, "data")?;
    let features = a.features.resolve(cfg)?;
    let seed = a.seed.resolve(cfg)?;
    let kernel = a.kernel.resolve_kernel(cfg, features.len())?;
    let smo = a.kernel.resolve_smo(cfg, seed);
    let grid = pick(&a.gamma_grid, &cfg.gamma_grid).unwrap_or_else(default_gamma_grid);
    let base_w2 = pick(&a.base_w2, &cfg.base_w2).unwrap_or(DEFAULT_BASE_W2);
    let folds = pick(&a.folds, &cfg.folds).unwrap_or(DEFAULT_FOLDS);

    let data = load_data(&data_path)?;
    let report = penalty_sweep(&data, &features, kernel, smo, base_w2, &grid, folds, seed)?;
    println!("{report}");
    if let Some(gamma) = choose_ratio(&report) {
        println!("chosen ratio w1/w2: {gamma}");
    }
    if let Some(path) = pick(&a.out, &cfg.out) {
        write_atomic(&path, |w| report.write_tsv(w))?;
    }
    if let Some(path) = pick(&a.csv_out, &cfg.csv_out) {
        write_atomic(&path, |w| report.write_csv(w))?;
    }
    Ok(())
}

fn cmd_intervals(a: &IntervalsArgs, cfg: &ConfigFile) -> anyhow::Result<()> {
    let defaults = IntervalSettings::default();
    let settings = IntervalSettings {
        hc_low: pick(&a.hc_min, &cfg.hc_min).unwrap_or(defaults.hc_low),
        hc_high: pick(&a.hc_max, &cfg.hc_max).unwrap_or(defaults.hc_high),
        grid_points: pick(&a.grid_points, &cfg.grid_points).unwrap_or(defaults.grid_points),
        root_tol: pick(&a.root_tol, &cfg.root_tol).unwrap_or(defaults.root_tol),
    };
    settings.validate()?;
    let levels = pick(&a.o2, &cfg.o2).unwrap_or_else(|| DEFAULT_O2_LEVELS.to_vec());
    if levels.is_empty() {
        return Err(usage("--o2 needs at least one level").into());
    }

    let model: FittedLogistic = match (pick(&a.model_file, &cfg.model_file), pick(&a.data, &cfg.data)) {
        (Some(path), _) => match load_model(&path)? {
            Classifier::Logistic(m) => m,
            Classifier::Svm(_) => bail!("{} holds an svm model; intervals need a logistic model", path.display()),
        },
        (None, Some(path)) => {
            let features = a.features.resolve(cfg)?;
            let learner = LearnerConfig::Logistic(a.logistic_settings(cfg));
            match train(&load_data(&path)?, &features, &learner)? {
                Classifier::Logistic(m) => m,
                Classifier::Svm(_) => unreachable!("logistic learner"),
            }
        }
        (None, None) => return Err(usage("intervals needs --model-file or --data").into()),
    };

    let mut intervals = Vec::with_capacity(levels.len());
    for &o2 in &levels {
        intervals.push(explosion_interval(&model, o2, &settings)?);
    }
    for iv in &intervals {
        match iv.limits {
            Some(l) => println!("o2 = {:>6}: explosive for hc in [{:.4}, {:.4}]", iv.o2, l.lower, l.upper),
            None => println!("o2 = {:>6}: no explosive hc in [{}, {}]", iv.o2, settings.hc_low, settings.hc_high),
        }
    }
    write_report(pick(&a.out, &cfg.out).as_deref(), |w| {
        writeln!(w, "o2,lower,upper,present")?;
        for iv in &intervals {
            match iv.limits {
                Some(l) => writeln!(w, "{},{},{},true", iv.o2, l.lower, l.upper)?,
                None => writeln!(w, "{},,,false", iv.o2)?,
            }
        }
        Ok(())
    })?;
    if let Some(path) = pick(&a.profile_out, &cfg.profile_out) {
        let mut profiles = Vec::with_capacity(levels.len());
        for &o2 in &levels {
            profiles.push((o2, probability_profile(&model, o2, &settings)?));
        }
        write_atomic(&path, |w| {
            writeln!(w, "o2\thc\tg\tp")?;
            for (o2, rows) in &profiles {
                for (hc, g, p) in rows {
                    writeln!(w, "{o2}\t{hc}\t{g}\t{p}")?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}
