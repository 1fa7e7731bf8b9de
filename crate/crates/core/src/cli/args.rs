use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use super::{cmd_compare, cmd_run, cmd_synth, render_comparisons, write_atomic, ExperimentSpec, ResultsFile};
use crate::corpus::{ModalityConfig, SynthConfig};
use crate::error::Result;
use crate::evaluation::Method;

#[derive(Debug, Parser)]
#[command(name = "affect-scl", version, about = "Contrastive affect representation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multimodal corpus.
    Synth(SynthArgs),
    /// Run a cross-validation grid.
    Run(RunArgs),
    /// Significance-test two results files cell by cell.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 23)]
    pub participants: usize,
    #[arg(long, default_value_t = 6)]
    pub annotators: usize,
    #[arg(long, default_value_t = 60.0)]
    pub session_length: f64,
    /// Signal-to-noise power ratio of each feature (`inf` for noiseless).
    #[arg(long, default_value_t = 1.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "arousal")]
    pub dimension: String,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment spec; flags override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<f64>>,
    /// Modality configs such as `audio`, `audio+video` or `all`.
    #[arg(long, value_delimiter = ',')]
    pub modalities: Option<Vec<ModalityConfig>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Permute affect measures across windows with this seed.
    #[arg(long)]
    pub shuffle_labels: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub results_a: PathBuf,
    pub results_b: PathBuf,
    /// Compare only this method from the first file.
    #[arg(long)]
    pub method_a: Option<Method>,
    #[arg(long)]
    pub method_b: Option<Method>,
    /// Also write the comparison as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl RunArgs {
    pub fn into_spec(self) -> Result<ExperimentSpec> {
        let mut spec = match &self.spec {
            Some(path) => ExperimentSpec::from_json_file(path)?,
            None => ExperimentSpec::default(),
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag {
                    spec.$($field)+ = v;
                }
            };
        }
        set!(self.corpus => corpus_root);
        set!(self.output => output_dir);
        set!(self.methods => methods);
        set!(self.windows => window_lengths_s);
        set!(self.modalities => modalities);
        set!(self.runs => n_runs);
        set!(self.folds => k_folds);
        set!(self.seed => base_seed);
        set!(self.step => step_s);
        set!(self.epsilon => epsilon);
        set!(self.max_epochs => train.max_epochs);
        set!(self.workers => workers);
        if self.shuffle_labels.is_some() {
            spec.label_shuffle_seed = self.shuffle_labels;
        }
        Ok(spec)
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth(a) => {
            let cfg = SynthConfig {
                n_participants: a.participants,
                n_annotators: a.annotators,
                session_length_s: a.session_length,
                snr: a.snr,
                seed: a.seed,
                ..SynthConfig::default()
            };
            let n = cmd_synth(&cfg, &a.output, &a.dimension)?;
            println!("wrote {n} sessions to {}", a.output.display());
            Ok(true)
        }
        Command::Run(a) => {
            let spec = a.into_spec()?;
            let res = cmd_run(&spec)?;
            for c in &res.cells {
                match (&c.summary, &c.error) {
                    (Some(s), _) => println!(
                        "{:<44} mean {:.4}  ci95 {}  best {:.4}",
                        c.key.to_string(),
                        s.mean_accuracy,
                        s.ci95_half_width.map_or("-".into(), |h| format!("{h:.4}")),
                        s.best_fold_accuracy
                    ),
                    (None, Some(e)) => println!("{:<44} FAILED: {e}", c.key.to_string()),
                    (None, None) => {}
                }
            }
            println!("results in {}", spec.output_dir.display());
            Ok(res.failures() == 0)
        }
        Command::Compare(a) => {
            let ra = ResultsFile::load(&a.results_a)?;
            let rb = ResultsFile::load(&a.results_b)?;
            let rows = cmd_compare(&ra, &rb, a.method_a, a.method_b)?;
            print!("{}", render_comparisons(&rows));
            if let Some(out) = a.output {
                write_atomic(&out, &serde_json::to_vec_pretty(&rows)?)?;
            }
            Ok(true)
        }
    }
}

/// Parses `args` and runs the command. Exit status is nonzero on any fatal
/// error or failed grid cell.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
