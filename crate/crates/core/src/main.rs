use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uavlasov::harness::*;
use uavlasov::Result;

#[derive(Parser)]
#[command(name = "uavlasov", version, about = "Uniformly accurate strong-field particle integrators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error table over (eps, steps) against the reference solution.
    Sweep(Common),
    /// Relative energy error history for every (eps, steps).
    Energy(Common),
    /// Error versus wall time of MRC, TSF and MM at the first eps.
    Efficiency(Common),
    /// Magnetic moment history of the reparametrized scheme.
    Moment(Common),
    /// Self-consistent Vlasov-Poisson run with MRC.
    Vp {
        #[command(flatten)]
        common: Common,
        /// Density snapshot period in macro steps (0 disables snapshots).
        #[arg(long, default_value_t = 8)]
        snapshot_every: usize,
    },
    /// Distance to the averaged model at stroboscopic times.
    LimitCompare {
        #[command(flatten)]
        common: Common,
        /// Step of the averaged-model integrator.
        #[arg(long, default_value = "1e-3")]
        dt_limit: String,
        /// Compare ensemble densities instead of single trajectories.
        #[arg(long)]
        density: bool,
    },
    /// Dense micro-macro trajectory paired with the reference.
    Recover(Common),
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    field: Option<String>,
    /// Comma list; accepts `2^-k`.
    #[arg(long)]
    eps: Option<String>,
    /// Comma list of step counts, `dt = T/M`.
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    ntau: Option<String>,
    #[arg(long)]
    tfinal: Option<String>,
    /// Restart period of the micro-macro scheme, in time units or `none`.
    #[arg(long)]
    restart_period: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Reference solver, `gbs[:per_period]` or `rk4[:dt]`.
    #[arg(long)]
    oracle: Option<String>,
    /// Extra `key=value` settings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("scheme", &self.scheme),
            ("field", &self.field),
            ("eps", &self.eps),
            ("steps", &self.steps),
            ("ntau", &self.ntau),
            ("tfinal", &self.tfinal),
            ("restart_period", &self.restart_period),
            ("seed", &self.seed),
            ("oracle", &self.oracle),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| uavlasov::Error::Config(format!("expected KEY=VALUE, got '{kv}'")))?;
            cfg.set(k, v)?;
        }
        cfg.out = Some(self.out.clone());
        Ok(cfg)
    }
}

fn tag(eps: f64, steps: usize) -> String {
    format!("eps{eps:e}_M{steps}")
}

fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let hash = cfg.hash();
    if cfg.scheme == Scheme::MmReparam {
        let recs = reparam_sweep(cfg)?;
        let mut w = CsvWriter::create(
            &out.join("reparam_errors.csv"),
            &["eps", "steps", "ds", "err_x", "err_vpar", "err_speed", "wall_time_s"],
            &hash,
        )?;
        for r in &recs {
            println!("eps {:e} ds {:e} x {:.3e} v_par {:.3e} |v| {:.3e}", r.eps, r.ds, r.err_x, r.err_vpar, r.err_speed);
            w.row(&[
                fmt_f(r.eps),
                r.steps.to_string(),
                fmt_f(r.ds),
                fmt_f(r.err_x),
                fmt_f(r.err_vpar),
                fmt_f(r.err_speed),
                fmt_f(r.wall_time),
            ])?;
        }
        return w.finish();
    }
    let recs = convergence_sweep(cfg)?;
    for r in &recs {
        println!("{} eps {:e} M {} error {:.3e}", r.scheme, r.eps, r.steps, r.error);
    }
    for &eps in &cfg.eps {
        let (m, e): (Vec<f64>, Vec<f64>) =
            recs.iter().filter(|r| r.eps == eps).map(|r| (r.steps as f64, r.error)).unzip();
        match fit_order(&m, &e) {
            Some(p) => println!("eps {eps:e}: fitted order {p:.2}"),
            None => println!("eps {eps:e}: too few points inside the fit window"),
        }
    }
    write_error_records(&out.join("errors.csv"), &recs, &hash)
}

fn energy(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let hash = cfg.hash();
    for &eps in &cfg.eps {
        for &m in &cfg.steps {
            let h = energy_history(cfg.scheme, cfg, eps, m)?;
            let max = h.iter().map(|p| p.1).fold(0.0, f64::max);
            println!("{} eps {eps:e} M {m}: max relative energy error {max:.3e}", cfg.scheme);
            let rows: Vec<Vec<f64>> = h.iter().map(|&(t, e)| vec![t, e]).collect();
            let name = format!("energy_{}_{}.csv", cfg.scheme, tag(eps, m));
            write_series(&out.join(name), &["t", "rel_energy_error"], &rows, &hash)?;
        }
    }
    Ok(())
}

fn moment(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let hash = cfg.hash();
    for &eps in &cfg.eps {
        for &m in &cfg.steps {
            let h = moment_history(cfg, eps, m)?;
            let i0 = h[0].1;
            let dev = h.iter().map(|p| (p.1 - i0).abs()).fold(0.0, f64::max);
            println!("eps {eps:e} steps {m}: max |I - I0|/(eps I0) = {:.3}", dev / (eps * i0));
            let rows: Vec<Vec<f64>> = h.iter().map(|&(t, i)| vec![t, i]).collect();
            write_series(&out.join(format!("moment_{}.csv", tag(eps, m))), &["t", "moment"], &rows, &hash)?;
        }
    }
    Ok(())
}

fn efficiency(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let recs = efficiency_compare(cfg)?;
    for r in &recs {
        println!("{} M {} error {:.3e} time {:.3e}s", r.scheme, r.steps, r.error, r.wall_time);
    }
    write_error_records(&out.join("efficiency.csv"), &recs, &cfg.hash())
}

fn vp(cfg: &ExperimentConfig, out: &Path, snapshot_every: usize) -> Result<()> {
    let s = vlasov_poisson(cfg, Some(out), snapshot_every)?;
    println!(
        "{} particles, eps {:e}: max relative energy error {:.3e}, symmetry defect {:.3e} -> {:.3e}, {} field solves, {:.1}s",
        s.particles,
        s.eps,
        s.report.max_rel_energy_error,
        s.defect_initial,
        s.defect_final,
        s.report.field_solves,
        s.wall_time
    );
    Ok(())
}

fn limit(cfg: &ExperimentConfig, out: &Path, dt_limit: f64, density: bool) -> Result<()> {
    let hash = cfg.hash();
    if density {
        let d = density_limit_compare(cfg, dt_limit)?;
        for (eps, v) in &d {
            println!("eps {eps:e}: density discrepancy {v:.3e}");
        }
        let rows: Vec<Vec<f64>> = d.iter().map(|&(e, v)| vec![e, v]).collect();
        return write_series(&out.join("density_limit.csv"), &["eps", "discrepancy"], &rows, &hash);
    }
    let recs = limit_compare(cfg, dt_limit)?;
    for r in &recs {
        println!("eps {:e} t* {:.6} discrepancy {:.3e}", r.eps, r.t_star, r.discrepancy);
    }
    let rows: Vec<Vec<f64>> = recs.iter().map(|r| vec![r.eps, r.t_star, r.discrepancy]).collect();
    write_series(&out.join("limit.csv"), &["eps", "t_star", "discrepancy"], &rows, &hash)
}

fn recover(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let hash = cfg.hash();
    for &eps in &cfg.eps {
        for &m in &cfg.steps {
            let pts = recover_trajectory(cfg, eps, m)?;
            println!("eps {eps:e} M {m}: sup position error {:.3e}", sup_position_error(&pts));
            let rows: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| {
                    let mut r = vec![p.t];
                    r.extend(p.state.to_array());
                    r.extend(p.reference.x.iter());
                    r.push((p.state.x - p.reference.x).norm());
                    r
                })
                .collect();
            write_series(
                &out.join(format!("trajectory_{}.csv", tag(eps, m))),
                &["t", "x1", "x2", "x3", "v1", "v2", "v3", "ref_x1", "ref_x2", "ref_x3", "position_error"],
                &rows,
                &hash,
            )?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads();
    match cli.command {
        Command::Sweep(c) => sweep(&c.config()?, &c.out),
        Command::Energy(c) => energy(&c.config()?, &c.out),
        Command::Efficiency(c) => efficiency(&c.config()?, &c.out),
        Command::Moment(c) => moment(&c.config()?, &c.out),
        Command::Vp { common, snapshot_every } => vp(&common.config()?, &common.out, snapshot_every),
        Command::LimitCompare { common, dt_limit, density } => {
            limit(&common.config()?, &common.out, parse_real(&dt_limit)?, density)
        }
        Command::Recover(c) => recover(&c.config()?, &c.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
