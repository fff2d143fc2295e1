//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::assist::{locality_certificate, report, CertificateReport, LocalBasis, Report};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::mc::{run_to_dir, McConfig, McStats};
use crate::povm::{povm_optimize, PovmReport};
use crate::state::{
    parse_state, permute_parties, state_to_json, Fixture, FourQubitPure, Party, Permutation,
    Sampler,
};

#[derive(Debug, Parser)]
#[command(
    name = "coassist",
    version,
    about = "Concurrence of assistance for four-qubit pure states"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Joint and local optima for the keeper pair.
    Compute {
        #[arg(long)]
        state: PathBuf,
        /// Keeper pair; the other two parties assist.
        #[arg(long, value_enum, default_value = "ab")]
        pair: Pair,
        #[arg(long)]
        json: bool,
    },
    /// Decide whether local measurements reach the joint optimum.
    Certify {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Monte-Carlo campaign over random states.
    Sample {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        seed: u64,
        /// Also average over the six keeper pairs.
        #[arg(long)]
        six_pair: bool,
        #[arg(long, default_value = "mc-output")]
        out: PathBuf,
        #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u64).range(2..))]
        bins: u64,
        /// Worker threads; all cores by default.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        workers: Option<u64>,
        #[arg(long, value_enum, default_value = "gaussian-phase")]
        sampler: SamplerArg,
    },
    /// Search four-outcome POVMs on the first assistant.
    Povm {
        #[arg(long)]
        state: PathBuf,
        /// The assistant that applies the POVM.
        #[arg(long, value_enum, default_value = "c")]
        party: FirstParty,
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
        restarts: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Write a named example state.
    Fixture {
        #[arg(value_enum)]
        name: FixtureArg,
        /// Output file; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "UPPER")]
pub enum Pair {
    #[value(alias = "ab")]
    Ab,
    #[value(alias = "ac")]
    Ac,
    #[value(alias = "ad")]
    Ad,
    #[value(alias = "bc")]
    Bc,
    #[value(alias = "bd")]
    Bd,
    #[value(alias = "cd")]
    Cd,
}

impl Pair {
    fn parties(self) -> (Party, Party) {
        use Party::*;
        match self {
            Pair::Ab => (A, B),
            Pair::Ac => (A, C),
            Pair::Ad => (A, D),
            Pair::Bc => (B, C),
            Pair::Bd => (B, D),
            Pair::Cd => (C, D),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "UPPER")]
pub enum FirstParty {
    #[value(alias = "c")]
    C,
    #[value(alias = "d")]
    D,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SamplerArg {
    Haar,
    GaussianPhase,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureArg {
    Ghz,
    Swap,
    Comm75,
    Povm31,
}

impl From<FixtureArg> for Fixture {
    fn from(f: FixtureArg) -> Self {
        match f {
            FixtureArg::Ghz => Fixture::Ghz,
            FixtureArg::Swap => Fixture::Swap,
            FixtureArg::Comm75 => Fixture::Comm75,
            FixtureArg::Povm31 => Fixture::Povm31,
        }
    }
}

/// Six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        format!("{:.*}", (5 - exp).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn load_state(path: &Path) -> Result<FourQubitPure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::StateFormat(format!("{}: {e}", path.display())))?;
    parse_state(&text)
        .map(|(psi, _)| psi)
        .map_err(|e| Error::StateFormat(format!("{}: {e}", path.display())))
}

fn write_matrix(out: &mut dyn Write, name: &str, m: &CMatrix) -> std::io::Result<()> {
    writeln!(out, "{name}")?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|c| {
                let z = m[(r, c)];
                format!("{:>12} {:>12}i", sig6(z.re), sig6(z.im))
            })
            .collect();
        writeln!(out, "  {}", row.join("   "))?;
    }
    Ok(())
}

fn write_basis(out: &mut dyn Write, b: &LocalBasis) -> std::io::Result<()> {
    write_matrix(
        out,
        "w_c (measured kets are the conjugated columns)",
        &b.w_c,
    )?;
    write_matrix(out, "w_d", &b.w_d)
}

fn cmd_compute(out: &mut dyn Write, state: &Path, pair: Pair, json: bool) -> Result<()> {
    let psi = load_state(state)?;
    let (a, b) = pair.parties();
    let psi = permute_parties(&psi, Permutation::keepers(a, b)?);
    let rep: Report = report(&psi)?;
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&rep)?)?;
        return Ok(());
    }
    writeln!(out, "keepers        {a}{b}")?;
    writeln!(out, "csharp         {}", sig6(rep.csharp))?;
    writeln!(out, "cflat          {}", sig6(rep.cflat))?;
    let gain = rep.relative_gain.map_or("inf".to_string(), sig6);
    writeln!(out, "relative_gain  {gain}")?;
    writeln!(out, "verdict        {}", rep.verdict.as_str())?;
    Ok(())
}

fn cmd_certify(out: &mut dyn Write, state: &Path, json: bool) -> Result<()> {
    let psi = load_state(state)?;
    let cert = locality_certificate(&psi)?;
    if json {
        let rep = CertificateReport::from(&cert);
        writeln!(out, "{}", serde_json::to_string_pretty(&rep)?)?;
        return Ok(());
    }
    let sigma: Vec<String> = cert.sigma.iter().map(|&s| sig6(s)).collect();
    writeln!(out, "rank_class        {}", cert.rank_class)?;
    writeln!(out, "sigma             {}", sigma.join(" "))?;
    if let Some(phi) = cert.phi {
        writeln!(out, "phi               {}", sig6(phi))?;
    }
    writeln!(out, "pattern_residual  {}", sig6(cert.pattern_residual))?;
    writeln!(out, "verdict           {}", cert.verdict.as_str())?;
    if let Some(basis) = &cert.local_basis {
        write_basis(out, basis)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    out: &mut dyn Write,
    n: u64,
    seed: u64,
    six_pair: bool,
    dir: &Path,
    bins: u64,
    workers: Option<u64>,
    sampler: SamplerArg,
) -> Result<()> {
    let cfg = McConfig {
        n_states: n as usize,
        seed,
        six_pair,
        hist_bins: bins as usize,
        workers: workers.map(|w| w as usize),
        sampler: match sampler {
            SamplerArg::Haar => Sampler::Haar,
            SamplerArg::GaussianPhase => Sampler::GaussianPhase,
        },
    };
    let run = run_to_dir(&cfg, dir)?;
    write_headline(out, &run.stats)?;
    writeln!(out, "output                  {}", dir.display())?;
    Ok(())
}

fn write_headline(out: &mut dyn Write, s: &McStats) -> std::io::Result<()> {
    let gain = |g: Option<f64>| g.map_or("n/a".to_string(), sig6);
    writeln!(out, "states                  {}", s.n_states)?;
    writeln!(
        out,
        "mean csharp             {}",
        sig6(s.single_pair.mean_csharp)
    )?;
    writeln!(
        out,
        "mean cflat              {}",
        sig6(s.single_pair.mean_cflat)
    )?;
    writeln!(
        out,
        "mean relative_gain      {}",
        gain(s.single_pair.mean_relative_gain)
    )?;
    if let Some(six) = &s.six_pair {
        writeln!(out, "six-pair mean csharp    {}", sig6(six.mean_csharp))?;
        writeln!(out, "six-pair mean cflat     {}", sig6(six.mean_cflat))?;
        writeln!(
            out,
            "six-pair relative_gain  {}",
            gain(six.mean_relative_gain)
        )?;
        writeln!(
            out,
            "variance csharp         {} (six-pair {})",
            sig6(s.single_pair.var_csharp),
            sig6(six.var_csharp)
        )?;
        writeln!(
            out,
            "variance cflat          {} (six-pair {})",
            sig6(s.single_pair.var_cflat),
            sig6(six.var_cflat)
        )?;
    }
    Ok(())
}

fn cmd_povm(
    out: &mut dyn Write,
    state: &Path,
    party: FirstParty,
    restarts: u64,
    seed: u64,
    json: bool,
) -> Result<()> {
    let psi = load_state(state)?;
    let party = match party {
        FirstParty::C => Party::C,
        FirstParty::D => Party::D,
    };
    let search = povm_optimize(&psi, party, restarts as usize, seed)?;
    let rep = PovmReport::from_search(&search);
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&rep)?)?;
        return Ok(());
    }
    writeln!(out, "order     {} (POVM first)", rep.order)?;
    writeln!(out, "value     {} (lower bound)", sig6(rep.value))?;
    writeln!(out, "cflat     {}", sig6(rep.cflat))?;
    writeln!(out, "gap       {}", sig6(rep.gap))?;
    for (k, e) in search.povm.elements().iter().enumerate() {
        write_matrix(out, &format!("E{}", k + 1), e)?;
    }
    Ok(())
}

fn cmd_fixture(out: &mut dyn Write, name: FixtureArg, path: Option<&Path>) -> Result<()> {
    let f = Fixture::from(name);
    let text = state_to_json(&f.state(), Some(&f.label())) + "\n";
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Executes a parsed command, writing human or JSON output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Compute { state, pair, json } => cmd_compute(out, &state, pair, json),
        Command::Certify { state, json } => cmd_certify(out, &state, json),
        Command::Sample {
            n,
            seed,
            six_pair,
            out: dir,
            bins,
            workers,
            sampler,
        } => cmd_sample(out, n, seed, six_pair, &dir, bins, workers, sampler),
        Command::Povm {
            state,
            party,
            restarts,
            seed,
            json,
        } => cmd_povm(out, &state, party, restarts, seed, json),
        Command::Fixture { name, out: path } => cmd_fixture(out, name, path.as_deref()),
    }
}

/// Parses `args`, runs, and returns the process exit code: 0 on success, 1 on a
/// runtime error, 2 on a usage error.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
            } else {
                let _ = out.write_all(text.as_bytes());
            }
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
