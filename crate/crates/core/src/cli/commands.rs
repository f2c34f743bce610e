use std::path::{Path, PathBuf};
use std::time::Instant;

use super::{default_out, load_section, AblateArgs, BaselineArgs, CliError, EvalArgs, GenDataArgs, GridArgs, RunConfig, RunManifest, TrainArgs};
use crate::codec::sha256_hex;
use crate::datagen::{self, DatasetError, EpisodeRecord};
use crate::evalkit::{self, ablation_report, EvalError, GridReport, GridSpec, PidTracker};
use crate::numgrad::{Checkpoint, CheckpointError};
use crate::policy::{self, Agent, PolicyError, TrainConfig, Variant};
use crate::tracksim::write_trace;

pub(super) struct Context {
    pub command: Vec<String>,
    pub dump_config: bool,
}

impl Context {
    /// Prints the resolved config when asked to; returns whether to stop.
    fn dumped(&self, cfg: &RunConfig) -> bool {
        if self.dump_config {
            print!("{}", cfg.to_toml());
        }
        self.dump_config
    }

    fn manifest(&self, cfg: &RunConfig) -> RunManifest {
        RunManifest::new(self.command.clone(), cfg.clone())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn dataset_err(e: DatasetError) -> CliError {
    match e {
        DatasetError::Io(path, err) => CliError::Io(format!("{path}: {err}")),
        other => CliError::Data(other.to_string()),
    }
}

fn policy_err(e: PolicyError) -> CliError {
    match e {
        PolicyError::Config(m) => CliError::Config(m),
        PolicyError::Data(m) => CliError::Data(m),
        e @ PolicyError::NonFinite { .. } => CliError::Diverged(e.to_string()),
        PolicyError::Mismatch(m) => CliError::Checkpoint(m),
        PolicyError::Checkpoint(e) => ckpt_err(e),
        e @ PolicyError::Numgrad(_) => CliError::Internal(e.to_string()),
    }
}

fn ckpt_err(e: CheckpointError) -> CliError {
    match e {
        CheckpointError::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Checkpoint(other.to_string()),
    }
}

fn eval_err(e: EvalError) -> CliError {
    match e {
        EvalError::Policy(p) => policy_err(p),
        EvalError::Grid(m) => CliError::Config(m),
        other => CliError::Internal(other.to_string()),
    }
}

fn finish(mut manifest: RunManifest, start: Instant, path: &Path) -> Result<(), CliError> {
    manifest.duration_secs = start.elapsed().as_secs_f64();
    write(path, manifest.to_toml())
}

fn load_data(path: &Path) -> Result<(Vec<EpisodeRecord>, String), CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let episodes = datagen::format::decode(&bytes).map_err(dataset_err)?;
    Ok((episodes, sha256_hex(&bytes)))
}

pub(super) fn gen_data(ctx: &Context, mut cfg: RunConfig, a: GenDataArgs) -> Result<(), CliError> {
    if let Some(g) = &a.grid {
        cfg.datagen.grid = load_section(g, "grid")?;
    }
    if let Some(n) = a.episodes {
        cfg.datagen.episodes_per_cell = n;
    }
    if let Some(s) = a.noise {
        cfg.datagen.noise = s;
    }
    if let Some(s) = a.seed {
        cfg.datagen.seed = s;
    }
    if ctx.dumped(&cfg) {
        return Ok(());
    }
    let start = Instant::now();
    let out = a.out.unwrap_or_else(|| default_out("gen-data").join("dataset.ctxd"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let episodes = datagen::generate_dataset(&cfg.datagen).map_err(|e| match e {
        DatasetError::Invalid(m) => CliError::Config(m),
        other => dataset_err(other),
    })?;
    let summary = datagen::save_dataset(&out, &cfg.datagen, &episodes).map_err(dataset_err)?;
    eprintln!(
        "wrote {} episodes ({} steps, {} full-length) to {}",
        summary.episode_count,
        summary.total_steps,
        summary.success_episodes,
        out.display()
    );
    let mut m = ctx.manifest(&cfg);
    m.seeds.insert("datagen".into(), cfg.datagen.seed);
    m.dataset_sha256 = Some(summary.sha256);
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".run.toml");
    finish(m, start, &out.with_file_name(name))
}

/// `(file name, SHA-256)` of written checkpoints.
type Digests = Vec<(String, String)>;

/// Trains one configuration, writing the checkpoint, its intermediate
/// snapshots and the loss log into `dir`. Returns the final checkpoint and
/// its file digest.
fn train_into(dir: &Path, cfg: &TrainConfig, episodes: &[EpisodeRecord]) -> Result<(Checkpoint, Digests), CliError> {
    create_dir(dir)?;
    let mut digests = Vec::new();
    let mut snapshot_err = None;
    let every = (cfg.steps / 10).max(1);
    let mut trainer = policy::Trainer::new(cfg.clone(), episodes).map_err(policy_err)?;
    let mut log = trainer.log_template();
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("train_log.csv")).map_err(|e| io_err(dir, e))?);
    use std::io::Write;
    writeln!(csv, "{}", log.header()).map_err(|e| io_err(dir, e))?;
    for _ in 0..cfg.steps {
        let row = trainer.train_step(episodes).map_err(policy_err)?;
        csv.write_all(log.csv_row(&row).as_bytes()).map_err(|e| io_err(dir, e))?;
        let step = row.step;
        if step % every == 0 || step == cfg.steps {
            eprintln!("  step {step}/{}: L_D {:.4} L_actor {:.4}", cfg.steps, row.critic, row.actor);
        }
        log.rows.push(row);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step < cfg.steps {
            let name = format!("checkpoint_{step:06}.ckpt");
            let bytes = trainer.checkpoint().to_bytes();
            if let Err(e) = std::fs::write(dir.join(&name), &bytes) {
                snapshot_err.get_or_insert(io_err(&dir.join(&name), e));
            }
            digests.push((name, sha256_hex(&bytes)));
        }
    }
    csv.flush().map_err(|e| io_err(dir, e))?;
    if let Some(e) = snapshot_err {
        return Err(e);
    }
    let ckpt = trainer.checkpoint();
    let bytes = ckpt.to_bytes();
    write(&dir.join("checkpoint.ckpt"), &bytes)?;
    digests.push(("checkpoint.ckpt".into(), sha256_hex(&bytes)));
    Ok((ckpt, digests))
}

fn apply_variant(cfg: &mut TrainConfig, flag: &str) -> Result<(), CliError> {
    let v = Variant::from_flag(flag).ok_or_else(|| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.flag()).collect();
        CliError::Usage(format!("unknown ablation `{flag}` (expected one of {})", names.join(", ")))
    })?;
    cfg.ablation = v.ablation();
    Ok(())
}

pub(super) fn train(ctx: &Context, mut cfg: RunConfig, a: TrainArgs) -> Result<(), CliError> {
    if let Some(f) = &a.ablate {
        apply_variant(&mut cfg.train, f)?;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = a.steps {
        cfg.train.steps = n;
    }
    cfg.train.validate().map_err(policy_err)?;
    if ctx.dumped(&cfg) {
        return Ok(());
    }
    let start = Instant::now();
    let (episodes, digest) = load_data(&a.data)?;
    let out = a.out.unwrap_or_else(|| default_out("train"));
    let (_, digests) = train_into(&out, &cfg.train, &episodes)?;
    let mut m = ctx.manifest(&cfg);
    m.seeds.insert("train".into(), cfg.train.seed);
    m.dataset_sha256 = Some(digest);
    m.checkpoints.extend(digests);
    eprintln!("wrote {}", out.join("checkpoint.ckpt").display());
    finish(m, start, &out.join("run.toml"))
}

fn resolve_grid(cfg: &mut RunConfig, a: &GridArgs) -> Result<(), CliError> {
    if let Some(g) = &a.grid {
        cfg.eval = load_section(g, "eval")?;
    }
    if let Some(n) = a.episodes {
        cfg.eval.episodes_per_cell = n;
    }
    if let Some(s) = a.seed {
        cfg.eval.seed = s;
    }
    cfg.eval.validate().map_err(eval_err)
}

/// Writes `grid.csv`, `table.txt` and (optionally) per-episode traces.
fn write_grid(dir: &Path, report: &GridReport, episodes: &[Vec<evalkit::EpisodeResult>], spec: &GridSpec) -> Result<(), CliError> {
    write(&dir.join("grid.csv"), report.to_csv())?;
    write(&dir.join("table.txt"), report.to_table())?;
    if episodes.iter().any(|c| c.iter().any(|e| !e.trace.is_empty())) {
        let tdir = dir.join("traces");
        create_dir(&tdir)?;
        for (c, cell) in episodes.iter().enumerate() {
            let (h, s) = spec.cells()[c];
            for (e, ep) in cell.iter().enumerate() {
                let path = tdir.join(format!("h{h}_v{s}_ep{e:03}.jsonl"));
                let mut buf = Vec::new();
                write_trace(&mut buf, &ep.trace).map_err(|err| io_err(&path, err))?;
                write(&path, buf)?;
            }
        }
    }
    print!("{}", report.to_table());
    Ok(())
}

fn load_agent(path: &Path) -> Result<(Agent, String), CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes).map_err(ckpt_err)?;
    let agent = Agent::from_checkpoint(&ckpt).map_err(policy_err)?;
    Ok((agent, sha256_hex(&bytes)))
}

/// The observation size is fixed by the checkpoint.
fn match_masks(spec: &mut GridSpec, agent: &Agent) {
    let (w, h) = agent.mask_size();
    spec.base.mask_w = w;
    spec.base.mask_h = h;
}

pub(super) fn eval(ctx: &Context, mut cfg: RunConfig, a: EvalArgs) -> Result<(), CliError> {
    resolve_grid(&mut cfg, &a.grid)?;
    let (agent, digest) = load_agent(&a.ckpt)?;
    match_masks(&mut cfg.eval, &agent);
    if ctx.dumped(&cfg) {
        return Ok(());
    }
    let start = Instant::now();
    let out = a.grid.out.clone().unwrap_or_else(|| default_out("eval"));
    create_dir(&out)?;
    let spec = &cfg.eval;
    let (report, episodes) = evalkit::run_grid_detailed(spec, || agent.clone(), a.grid.traces).map_err(eval_err)?;
    write_grid(&out, &report, &episodes, spec)?;
    if a.export_context {
        let zdir = out.join("context");
        create_dir(&zdir)?;
        for (c, (h, s)) in spec.cells().into_iter().enumerate() {
            let mut ag = agent.clone();
            let z = evalkit::context_rollout(&mut ag, &spec.embodiment(h, s), &spec.scenario(s, spec.episode_seed(c, 0)))
                .map_err(eval_err)?;
            write(&zdir.join(format!("h{h}_v{s}.csv")), evalkit::context_csv(&z))?;
        }
    }
    let mut m = ctx.manifest(&cfg);
    m.seeds.insert("eval".into(), spec.seed);
    m.checkpoints.insert(a.ckpt.display().to_string(), digest);
    finish(m, start, &out.join("run.toml"))
}

pub(super) fn baseline(ctx: &Context, mut cfg: RunConfig, a: BaselineArgs) -> Result<(), CliError> {
    resolve_grid(&mut cfg, &a.grid)?;
    if ctx.dumped(&cfg) {
        return Ok(());
    }
    let start = Instant::now();
    let out = a.grid.out.clone().unwrap_or_else(|| default_out("baseline"));
    create_dir(&out)?;
    let gains = cfg.datagen.gains;
    let (report, episodes) = match a.kind {
        super::BaselineType::Pid => evalkit::run_grid_detailed(&cfg.eval, || PidTracker::new(gains), a.grid.traces),
    }
    .map_err(eval_err)?;
    write_grid(&out, &report, &episodes, &cfg.eval)?;
    let mut m = ctx.manifest(&cfg);
    m.seeds.insert("eval".into(), cfg.eval.seed);
    finish(m, start, &out.join("run.toml"))
}

pub(super) fn ablate(ctx: &Context, mut cfg: RunConfig, a: AblateArgs) -> Result<(), CliError> {
    debug_assert!(a.all);
    resolve_grid(&mut cfg, &a.grid)?;
    if let Some(s) = a.grid.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = a.steps {
        cfg.train.steps = n;
    }
    cfg.train.validate().map_err(policy_err)?;
    if ctx.dumped(&cfg) {
        return Ok(());
    }
    let start = Instant::now();
    let (episodes, digest) = load_data(&a.data)?;
    let out = a.grid.out.clone().unwrap_or_else(|| default_out("ablate"));
    create_dir(&out)?;
    let mut m = ctx.manifest(&cfg);
    m.seeds.insert("train".into(), cfg.train.seed);
    m.seeds.insert("eval".into(), cfg.eval.seed);
    m.dataset_sha256 = Some(digest);
    let mut reports = Vec::new();
    for v in Variant::ALL {
        eprintln!("training {}", v.label());
        let mut tc = cfg.train.clone();
        tc.ablation = v.ablation();
        let dir: PathBuf = out.join(v.flag());
        let (ckpt, digests) = train_into(&dir, &tc, &episodes)?;
        for (name, d) in digests {
            m.checkpoints.insert(format!("{}/{name}", v.flag()), d);
        }
        let agent = Agent::from_checkpoint(&ckpt).map_err(policy_err)?;
        let mut spec = cfg.eval.clone();
        match_masks(&mut spec, &agent);
        let (report, eps) = evalkit::run_grid_detailed(&spec, || agent.clone(), a.grid.traces).map_err(eval_err)?;
        write(&dir.join("grid.csv"), report.to_csv())?;
        write(&dir.join("table.txt"), report.to_table())?;
        if a.grid.traces {
            write_grid(&dir, &report, &eps, &spec)?;
        }
        reports.push((v, report));
    }
    let entries: Vec<(Variant, &GridReport)> = reports.iter().map(|(v, r)| (*v, r)).collect();
    let table = ablation_report(&entries);
    write(&out.join("ablation.csv"), table.to_csv())?;
    write(&out.join("ablation.txt"), table.to_table())?;
    print!("{}", table.to_table());
    finish(m, start, &out.join("run.toml"))
}

pub(super) fn selftest(ctx: &Context) -> Result<(), CliError> {
    if ctx.dump_config {
        print!("{}", RunConfig::default().to_toml());
        return Ok(());
    }
    let items = super::run_selftest();
    let mut failed = 0;
    for it in &items {
        println!("{} {:<40} {}", if it.pass { "PASS" } else { "FAIL" }, it.name, it.detail);
        failed += usize::from(!it.pass);
    }
    println!("{} of {} checks passed", items.len() - failed, items.len());
    if failed > 0 {
        Err(CliError::Selftest(failed))
    } else {
        Ok(())
    }
}
