//! The five subcommands. Every file lives under
//! `<output_dir>/<problem>/`; the resolved config sits at the top.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use invbench::autodiff::Tensor;
use invbench::eval::{
    aggregate, build_oracles, condition_grid, contour_97, evaluate_model, mean_shift_mode, parse_records_csv,
    records_csv, time_inference, GridSpec, MeanShift,
};
use invbench::models::{train_from, Checkpoint, Dims, Model, ModelKind, TrainProgress};
use invbench::problems::{generate_dataset, rejection_sample_posterior, Dataset, Problem, ProblemKind, SampleSet, ORACLE_SOURCE};
use invbench::seed::{derive_seed, stream};

use crate::config::{ConfigError, RunConfig};

/// The resolved configuration plus command-line filters.
pub struct Run {
    pub cfg: RunConfig,
    pub problems: Vec<ProblemKind>,
    /// Model ids; `oracle` is accepted by `plotdata` only.
    pub models: Vec<String>,
}

impl Run {
    pub fn new(cfg: RunConfig, problems: &[String], models: &[String]) -> Result<Self> {
        cfg.validate()?;
        let problems = if problems.is_empty() {
            cfg.problems.clone()
        } else {
            problems
                .iter()
                .map(|p| p.parse().map_err(|_| ConfigError(format!("unknown problem {p:?}"))))
                .collect::<Result<_, _>>()?
        };
        let models = if models.is_empty() {
            cfg.models.iter().map(|m| m.id().to_string()).collect()
        } else {
            for m in models {
                if m != ORACLE_SOURCE && m.parse::<ModelKind>().is_err() {
                    return Err(ConfigError(format!("unknown model {m:?}")).into());
                }
            }
            models.to_vec()
        };
        Ok(Self { cfg, problems, models })
    }

    fn kinds(&self) -> Result<Vec<ModelKind>> {
        self.models
            .iter()
            .map(|m| m.parse().map_err(|_| ConfigError(format!("{m:?} is not a trainable model")).into()))
            .collect()
    }

    fn dir(&self, p: ProblemKind) -> Result<PathBuf> {
        let d = self.cfg.output_dir.join(p.name());
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        Ok(d)
    }

    fn write_config(&self) -> Result<()> {
        fs::create_dir_all(&self.cfg.output_dir)?;
        write(&self.cfg.output_dir.join("config.toml"), &self.cfg.to_toml())
    }

    fn seed(&self, kind: &str, p: ProblemKind, name: &str) -> u64 {
        derive_seed(self.cfg.seed, &format!("{kind}/{}/{name}", p.name()), 0)
    }

    fn dims(&self, p: ProblemKind) -> Dims {
        Dims {
            x: 4,
            y: self.cfg.problem(p).y_dim(),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Header plus numeric rows of a CSV written by this tool.
fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().split(',').map(String::from).collect::<Vec<_>>();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::parse::<f64>).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok((header, rows))
}

fn dataset(run: &Run, p: ProblemKind) -> Result<Dataset> {
    let problem = run.cfg.problem(p);
    let ds = generate_dataset(&problem, run.cfg.data.train_samples, run.seed("dataset", p, "train"))?;
    if p == ProblemKind::Ballistics {
        eprintln!(
            "{}: {} rows, {} prior draws, redraw rate {:.4}",
            p.name(),
            ds.len(),
            ds.header.draws,
            ds.redraw_rate()
        );
    }
    Ok(ds)
}

/// Loads the stored dataset when it matches the config, else regenerates.
fn load_dataset(run: &Run, p: ProblemKind) -> Result<Dataset> {
    let path = run.dir(p)?.join("dataset.bin");
    if let Ok(ds) = Dataset::load(&path) {
        if ds.header.config == run.cfg.problem(p)
            && ds.header.seed == run.seed("dataset", p, "train")
            && ds.len() == run.cfg.data.train_samples
        {
            return Ok(ds);
        }
    }
    let ds = dataset(run, p)?;
    ds.save(&path)?;
    Ok(ds)
}

fn oracle_csv(sets: &[SampleSet]) -> (String, String) {
    let dims = sets.first().map_or(0, |s| s.condition.len());
    let mut manifest = String::from("condition");
    for j in 0..dims {
        let _ = write!(manifest, ",y{}", j + 1);
    }
    manifest.push_str(",eps,samples,acceptance_rate\n");
    let mut samples = String::from("condition,x1,x2,x3,x4\n");
    for (i, s) in sets.iter().enumerate() {
        let _ = write!(manifest, "{i}");
        for v in &s.condition {
            let _ = write!(manifest, ",{v}");
        }
        let _ = writeln!(
            manifest,
            ",{},{},{}",
            s.eps.unwrap_or(f64::NAN),
            s.len(),
            s.acceptance_rate.unwrap_or(f64::NAN)
        );
        for x in s.samples.row_iter() {
            let _ = writeln!(samples, "{i},{},{},{},{}", x[0], x[1], x[2], x[3]);
        }
    }
    (manifest, samples)
}

fn read_oracles(dir: &Path) -> Result<Vec<SampleSet>> {
    let (mh, manifest) = read_numeric_csv(&dir.join("oracle_manifest.csv"))?;
    let (_, rows) = read_numeric_csv(&dir.join("oracles.csv"))?;
    let dims = mh.len() - 4;
    let mut sets: Vec<SampleSet> = manifest
        .iter()
        .map(|m| SampleSet {
            condition: m[1..=dims].to_vec(),
            samples: Tensor::zeros(0, 4),
            source: ORACLE_SOURCE.into(),
            eps: Some(m[dims + 1]),
            acceptance_rate: Some(m[dims + 3]),
        })
        .collect();
    let mut buf: Vec<Vec<[f64; 4]>> = vec![Vec::new(); sets.len()];
    for r in rows {
        let i = r[0] as usize;
        if i >= buf.len() || r.len() != 5 {
            bail!("malformed oracle samples in {}", dir.display());
        }
        buf[i].push([r[1], r[2], r[3], r[4]]);
    }
    for (s, rows) in sets.iter_mut().zip(buf) {
        s.samples = Tensor::from_rows(&rows);
    }
    Ok(sets)
}

/// The oracle sets for the configured condition grid; read back from disk
/// when an earlier run stored the same grid, so every model is scored
/// against identical references.
fn oracles(run: &Run, p: ProblemKind, rebuild: bool) -> Result<Vec<SampleSet>> {
    let problem = run.cfg.problem(p);
    let dir = run.dir(p)?;
    let settings = &run.cfg.eval;
    let seed = run.seed("eval", p, "grid");
    let grid = condition_grid(&problem, settings.conditions, seed)?;
    if !rebuild {
        if let Ok(sets) = read_oracles(&dir) {
            let eps = settings.eps_for(&problem);
            let same = sets.len() == grid.len()
                && sets
                    .iter()
                    .zip(&grid)
                    .all(|(s, y)| &s.condition == y && s.eps == Some(eps) && s.len() == settings.samples);
            if same {
                return Ok(sets);
            }
        }
    }
    let sets = build_oracles(&problem, &grid, settings, seed)?;
    let (manifest, samples) = oracle_csv(&sets);
    write(&dir.join("oracle_manifest.csv"), &manifest)?;
    write(&dir.join("oracles.csv"), &samples)?;
    Ok(sets)
}

pub fn generate(run: &Run) -> Result<()> {
    run.write_config()?;
    for &p in &run.problems {
        let dir = run.dir(p)?;
        let ds = dataset(run, p)?;
        ds.save(&dir.join("dataset.bin"))?;
        let mut csv = Vec::new();
        ds.write_csv(&mut csv)?;
        fs::write(dir.join("dataset.csv"), csv)?;
        let sets = oracles(run, p, true)?;
        let mean_rate = sets.iter().filter_map(|s| s.acceptance_rate).sum::<f64>() / sets.len() as f64;
        eprintln!(
            "{}: {} training rows, {} oracle sets (mean acceptance {:.2e})",
            p.name(),
            ds.len(),
            sets.len(),
            mean_rate
        );
    }
    Ok(())
}

fn checkpoint_path(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join("models").join(format!("{}.ckpt", kind.id()))
}

fn loss_curve_csv(progress: &TrainProgress) -> String {
    let ortho = !progress.orthogonality.is_empty();
    let mut out = String::from(if ortho { "epoch,loss,orthogonality\n" } else { "epoch,loss\n" });
    for (e, l) in progress.losses.iter().enumerate() {
        let _ = write!(out, "{},{l}", e + 1);
        if ortho {
            let _ = write!(out, ",{}", progress.orthogonality[e]);
        }
        out.push('\n');
    }
    out
}

pub struct TrainOptions {
    /// Stop after this many completed epochs; a later run resumes.
    pub stop_after: Option<usize>,
    /// Ignore existing checkpoints.
    pub fresh: bool,
}

pub fn train(run: &Run, opts: &TrainOptions) -> Result<()> {
    run.write_config()?;
    let kinds = run.kinds()?;
    let schedule = &run.cfg.schedule;
    for &p in &run.problems {
        let dir = run.dir(p)?;
        fs::create_dir_all(dir.join("models"))?;
        let ds = load_dataset(run, p)?;
        for &kind in &kinds {
            let path = checkpoint_path(&dir, kind);
            let spec = run.cfg.loss_for(kind);
            let fresh = Model::new(kind, run.dims(p), run.cfg.model.clone(), run.seed("model", p, kind.id()))?;
            let (mut model, progress) = match (opts.fresh, path.exists()) {
                (false, true) => {
                    let ck = Checkpoint::load(&path)?;
                    let m = &ck.model;
                    if m.kind != kind || m.seed != fresh.seed || m.config != fresh.config || m.dims != fresh.dims {
                        return Err(ConfigError(format!(
                            "{} was written under a different configuration; rerun with --fresh",
                            path.display()
                        ))
                        .into());
                    }
                    let progress = match ck.progress {
                        Some(pr) => pr,
                        None => {
                            eprintln!("{}/{}: checkpoint has no training state, skipping", p.name(), kind.id());
                            continue;
                        }
                    };
                    (ck.model, progress)
                }
                _ => {
                    let progress = TrainProgress::new(&fresh, schedule);
                    (fresh, progress)
                }
            };
            let until = opts.stop_after.unwrap_or(schedule.epochs).min(schedule.epochs);
            if progress.epoch >= until {
                eprintln!("{}/{}: already at epoch {}", p.name(), kind.id(), progress.epoch);
                continue;
            }
            let mut progress = progress;
            let start = std::time::Instant::now();
            while progress.epoch < until {
                let next = progress.epoch + 1;
                progress = train_from(&mut model, &ds.xs, &ds.ys, &spec, schedule, progress, next)
                    .with_context(|| format!("training {} on {}", kind.id(), p.name()))?
                    .progress;
                Checkpoint::new(model.clone(), Some(progress.clone())).save(&path)?;
                write(&dir.join(format!("loss_{}.csv", kind.id())), &loss_curve_csv(&progress))?;
            }
            eprintln!(
                "{}/{}: epoch {}/{} loss {:.5} ({} params, {:.1}s)",
                p.name(),
                kind.id(),
                progress.epoch,
                schedule.epochs,
                progress.losses.last().copied().unwrap_or(f64::NAN),
                model.param_count(),
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}

fn load_trained(dir: &Path, kind: ModelKind) -> Result<Model> {
    let path = checkpoint_path(dir, kind);
    let ck = Checkpoint::load(&path).with_context(|| format!("loading {}; run `train` first", path.display()))?;
    if !ck.model.is_trained() {
        bail!("{} is only partly trained; run `train` to finish it", path.display());
    }
    Ok(ck.model)
}

pub struct EvalOptions {
    pub timing: bool,
}

pub fn eval(run: &Run, opts: &EvalOptions) -> Result<()> {
    run.write_config()?;
    let kinds = run.kinds()?;
    for &p in &run.problems {
        let dir = run.dir(p)?;
        let problem = run.cfg.problem(p);
        let sets = oracles(run, p, false)?;
        for &kind in &kinds {
            let model = load_trained(&dir, kind)?;
            let records = evaluate_model(&model, &problem, &sets, &run.cfg.eval, run.seed("posterior", p, kind.id()))?;
            write(&dir.join(format!("records_{}.csv", kind.id())), &records_csv(&records))?;
            let timing_path = dir.join(format!("timing_{}.csv", kind.id()));
            if opts.timing && run.cfg.timing.enabled {
                let t = time_inference(
                    &model,
                    &sets[0].condition,
                    run.cfg.timing.samples,
                    run.cfg.eval.timing_repeats,
                    run.seed("timing", p, kind.id()),
                )?;
                let mut csv = String::from("run,ms\n");
                for (i, ms) in t.runs_ms.iter().enumerate() {
                    let _ = writeln!(csv, "{},{ms}", i + 1);
                }
                write(&timing_path, &csv)?;
            } else if timing_path.exists() {
                fs::remove_file(&timing_path)?;
            }
            let report = aggregate(&records, run.cfg.caps);
            let s = &report.models[0];
            eprintln!(
                "{}/{}: err_post {:.4}  err_resim {:.4}",
                p.name(),
                kind.id(),
                s.err_post.clamped_mean,
                s.err_resim.clamped_mean
            );
        }
    }
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn report(run: &Run) -> Result<()> {
    run.write_config()?;
    let kinds = run.kinds()?;
    for &p in &run.problems {
        let dir = run.dir(p)?;
        let mut records = Vec::new();
        for &kind in &kinds {
            let path = dir.join(format!("records_{}.csv", kind.id()));
            match fs::read_to_string(&path) {
                Ok(text) => records.extend(parse_records_csv(&text)?),
                Err(_) => eprintln!("{}/{}: no records, left out of the report", p.name(), kind.id()),
            }
        }
        if records.is_empty() {
            bail!("no evaluation records for {}; run `eval` first", p.name());
        }
        let mut rep = aggregate(&records, run.cfg.caps);
        rep.problem = p.name().to_string();
        rep.seed = run.cfg.seed;
        rep.config = run.cfg.to_toml();
        for m in &mut rep.models {
            let kind: ModelKind = m.model.parse()?;
            m.param_count = Checkpoint::load(checkpoint_path(&dir, kind)).ok().map(|c| c.model.param_count());
            let timing = dir.join(format!("timing_{}.csv", kind.id()));
            if timing.exists() {
                let (_, rows) = read_numeric_csv(&timing)?;
                let mut ms: Vec<f64> = rows.iter().map(|r| r[1]).collect();
                m.inference_ms = (!ms.is_empty()).then(|| median(&mut ms));
            }
        }
        write(&dir.join("table.csv"), &rep.table_csv())?;
        write(&dir.join("boxplot.csv"), &rep.boxplot_csv())?;
        write(&dir.join("report.txt"), &rep.text())?;
        print!("{}", rep.text().split("\n# configuration").next().unwrap_or_default());
        println!();
    }
    Ok(())
}

pub struct PlotOptions {
    pub target: Option<Vec<f64>>,
}

fn posterior(run: &Run, p: ProblemKind, dir: &Path, who: &str, target: &[f64]) -> Result<SampleSet> {
    let problem = run.cfg.problem(p);
    let n = run.cfg.plot.samples;
    let mut rng = stream(run.seed("plot", p, who), "samples", 0);
    if who == ORACLE_SOURCE {
        let eps = run.cfg.eval.eps_for(&problem);
        return Ok(rejection_sample_posterior(&problem, target, eps, n, &mut rng, run.cfg.eval.max_draws)?);
    }
    let model = load_trained(dir, who.parse()?)?;
    Ok(model.sample_posterior(target, n, &mut rng)?)
}

pub fn plotdata(run: &Run, opts: &PlotOptions) -> Result<()> {
    run.write_config()?;
    let plot = &run.cfg.plot;
    for &p in &run.problems {
        let dir = run.dir(p)?;
        let out = dir.join("plot");
        fs::create_dir_all(&out)?;
        let problem = run.cfg.problem(p);
        let target = match &opts.target {
            Some(t) => t.clone(),
            None => match p {
                ProblemKind::Kinematics => plot.kinematics_target.clone(),
                ProblemKind::Ballistics => plot.ballistics_target.clone(),
            },
        };
        if target.len() != problem.y_dim() {
            return Err(ConfigError(format!("{} targets have {} entries", p.name(), problem.y_dim())).into());
        }
        for who in &run.models {
            let set = posterior(run, p, &dir, who, &target)?;
            match &problem {
                Problem::Kinematics(k) => {
                    let mut arms = String::from("sample,joint,p1,p2\n");
                    for (i, x) in set.samples.row_iter().take(plot.lines).enumerate() {
                        for (j, q) in k.joints(x).iter().enumerate() {
                            let _ = writeln!(arms, "{i},{j},{},{}", q[0], q[1]);
                        }
                    }
                    write(&out.join(format!("arms_{who}.csv")), &arms)?;
                    let mut mode = String::from("joint,p1,p2\n");
                    if let Some(x) = mean_shift_mode(&set.samples, MeanShift::default()) {
                        for (j, q) in k.joints(&x).iter().enumerate() {
                            let _ = writeln!(mode, "{j},{},{}", q[0], q[1]);
                        }
                    }
                    write(&out.join(format!("mode_arm_{who}.csv")), &mode)?;
                    let ends: Vec<[f64; 2]> = set.samples.row_iter().map(|x| k.forward(x)).collect();
                    let mut csv = String::from("sample,p1,p2\n");
                    for (i, e) in ends.iter().enumerate() {
                        let _ = writeln!(csv, "{i},{},{}", e[0], e[1]);
                    }
                    write(&out.join(format!("endpoints_{who}.csv")), &csv)?;
                    let mut csv = String::from("line,point,p1,p2\n");
                    match contour_97(&ends, GridSpec::default()) {
                        Ok(c) => {
                            for (l, line) in c.polylines.iter().enumerate() {
                                for (i, q) in line.iter().enumerate() {
                                    let _ = writeln!(csv, "{l},{i},{},{}", q[0], q[1]);
                                }
                            }
                        }
                        Err(e) => eprintln!("{}/{who}: no contour: {e}", p.name()),
                    }
                    write(&out.join(format!("contour_{who}.csv")), &csv)?;
                }
                Problem::Ballistics(b) => {
                    let mut csv = String::from("sample,step,t,p1,p2\n");
                    for (i, x) in set.samples.row_iter().take(plot.lines).enumerate() {
                        let end = b.impact_time(x, b.t_max).unwrap_or(0.0);
                        for s in 0..plot.trajectory_steps {
                            let t = end * s as f64 / (plot.trajectory_steps - 1) as f64;
                            let (p1, p2) = b.trajectory(x, t);
                            let _ = writeln!(csv, "{i},{s},{t},{p1},{p2}");
                        }
                    }
                    write(&out.join(format!("trajectories_{who}.csv")), &csv)?;
                    let lo = target[0] - plot.hist_half_width;
                    let width = 2.0 * plot.hist_half_width / plot.bins as f64;
                    let mut counts = vec![0usize; plot.bins];
                    for x in set.samples.row_iter() {
                        let y = b.impact_location_lenient(x);
                        let k = ((y - lo) / width).floor();
                        if k >= 0.0 && (k as usize) < plot.bins {
                            counts[k as usize] += 1;
                        }
                    }
                    let mut csv = String::from("bin_lo,bin_hi,count,density\n");
                    for (k, c) in counts.iter().enumerate() {
                        let a = lo + k as f64 * width;
                        let _ = writeln!(csv, "{a},{},{c},{}", a + width, *c as f64 / (set.len() as f64 * width));
                    }
                    write(&out.join(format!("impact_hist_{who}.csv")), &csv)?;
                }
            }
        }
    }
    Ok(())
}
