//! Run artifacts: `samples.csv`, `summary.json`, `kde.csv`, `config.txt`
//! and gnuplot scripts under `plots/`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::ScenarioConfig;
use super::runner::{simulate, ReplicaSample, RunOutput, RunSummary};
use super::ScenarioError;

const DENSITY_PLOT: &str = "\
set datafile separator ','
set terminal pngcairo size 900,600
set output 'density.png'
set xlabel 'terminal X'
set ylabel 'density'
plot '../kde.csv' using 1:2 skip 1 with lines title 'kernel density of X_h'
";

const SCATTER_PLOT: &str = "\
set datafile separator ','
set terminal pngcairo size 900,600
set output 'terminal.png'
set xlabel 'terminal Z'
set ylabel 'terminal X'
plot '../samples.csv' using ($4 == 0 ? $3 : 1/0):2 skip 1 with dots title 'replicas'
";

/// Runs the scenario and writes every artifact into `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, threads: usize, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    let out = simulate(cfg, threads)?;
    write_outputs(cfg, &out, out_dir)?;
    Ok(out.summary)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: PathBuf, body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<(), ScenarioError> {
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
}

/// CSV with columns `replica,terminal_x,terminal_z,failed`; floats in
/// shortest round-trip form.
pub fn write_samples_csv<W: Write>(samples: &[ReplicaSample], mut w: W) -> io::Result<()> {
    writeln!(w, "replica,terminal_x,terminal_z,failed")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", s.replica, s.terminal_x, s.terminal_z, u8::from(s.failed))?;
    }
    Ok(())
}

pub fn write_outputs(cfg: &ScenarioConfig, out: &RunOutput, dir: &Path) -> Result<(), ScenarioError> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(io_err(&plots))?;
    write_file(dir.join("samples.csv"), |w| write_samples_csv(&out.samples, w))?;
    write_file(dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &out.summary)?;
        writeln!(w)
    })?;
    write_file(dir.join("config.txt"), |w| w.write_all(cfg.to_text().as_bytes()))?;
    if let Some(points) = &out.density {
        write_file(dir.join("kde.csv"), |w| {
            writeln!(w, "x,density")?;
            for (x, d) in points {
                writeln!(w, "{x},{d}")?;
            }
            Ok(())
        })?;
        write_file(plots.join("density.gp"), |w| w.write_all(DENSITY_PLOT.as_bytes()))?;
    }
    write_file(plots.join("terminal.gp"), |w| w.write_all(SCATTER_PLOT.as_bytes()))
}
