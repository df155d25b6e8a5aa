use std::path::PathBuf;

use circwass::io::{histogram_to_csv, histogram_to_json};
use circwass::labels::{conservative_label, Family, SmoothingSpec};
use clap::{Args, ValueEnum};

use crate::output::{emit, CliResult, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyName {
    Binomial,
    Poisson,
    Gaussian,
    Uniform,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Number of bins.
    #[arg(long = "n", visible_alias = "N")]
    pub n: usize,
    /// Ground-truth bin.
    #[arg(long, short = 'j')]
    pub j: usize,
    #[arg(long, value_enum, default_value = "binomial")]
    pub family: FamilyName,
    /// The unimodal window covers K+1 bins.
    #[arg(long = "k", visible_alias = "K", default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 5.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2.5)]
    pub sigma2: f64,
    /// Normalize the Gaussian densities directly instead of via softmax.
    #[arg(long)]
    pub plain: bool,
    /// Weight of the unimodal component.
    #[arg(long, default_value_t = 0.1)]
    pub xi: f64,
    /// Weight of the uniform component.
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl LabelArgs {
    fn smoothing(&self) -> SmoothingSpec {
        let family = match self.family {
            FamilyName::Uniform => return SmoothingSpec::uniform(self.eta),
            FamilyName::Binomial => Family::Binomial { p: self.p },
            FamilyName::Poisson => Family::Poisson { lambda: self.lambda },
            FamilyName::Gaussian => Family::Gaussian {
                sigma2: self.sigma2,
                softmax: !self.plain,
            },
        };
        SmoothingSpec {
            family,
            k: self.k,
            xi: self.xi,
            eta: self.eta,
        }
    }
}

pub fn run(args: &LabelArgs) -> CliResult<()> {
    let label = conservative_label(args.j, args.n, &args.smoothing())?;
    let text = match args.format {
        Format::Json => histogram_to_json(&label.histogram) + "\n",
        Format::Csv => histogram_to_csv(&label.histogram),
    };
    emit(args.out.as_deref(), &text)
}
