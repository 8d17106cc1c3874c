use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum CaseArg {
    Enh,
    Com,
}

/// Generator, resolvent and grid settings shared by the kernel commands.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "enh")]
    pub case: CaseArg,
    /// diffusion diagonal "D11,D22,D33" (completion: "D33" or "0,0,D33")
    #[arg(long = "D", value_delimiter = ',', allow_hyphen_values = true)]
    pub d: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Gamma order of the travelling time
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    /// spatial Gaussian scale (length²) or "auto"
    #[arg(long, default_value = "auto")]
    pub s: String,
    #[arg(long = "Ns", default_value_t = 128)]
    pub ns: usize,
    #[arg(long = "No", default_value_t = 48)]
    pub no: usize,
    #[arg(long = "sigma-oversample", default_value_t = 1)]
    pub sigma_oversample: usize,
}

/// Solver settings; each method reads the ones it needs.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// time step (FD and Monte Carlo); FD default comes from the stability limit
    #[arg(long)]
    pub dt: Option<f64>,
    /// FD quadrature horizon
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub paths: u64,
    /// exp | gamma:k | fixed:t (default follows --k)
    #[arg(long = "time-law")]
    pub time_law: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// FBT angular truncation (default 2R)
    #[arg(long = "fbt-n")]
    pub fbt_n: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KernelArgs {
    /// exact1 | exact2 | exact3 | fbt | fd-explicit | fd-implicit | mc
    #[arg(long, default_value = "exact3")]
    pub method: String,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// output prefix: writes PREFIX.skf, PREFIX.pgm and PREFIX.json
    #[arg(long, default_value = "kernel")]
    pub out: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    /// approximations compared against the reference
    #[arg(long, value_delimiter = ',', default_value = "fbt")]
    pub methods: Vec<String>,
    /// reference method
    #[arg(long, default_value = "exact3")]
    pub reference: String,
    /// σ_s values for a sweep (spatial ℓ1 only)
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Vec<f64>,
    /// compare stored kernels instead: reference SKF file
    #[arg(long)]
    pub exact: Option<String>,
    /// stored approximation SKF files
    #[arg(long, value_delimiter = ',')]
    pub approx: Vec<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV report; the manifest goes next to it
    #[arg(long, default_value = "compare.csv")]
    pub out: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CompletionArgs {
    /// source state "x,y,θ"
    #[arg(long, visible_alias = "g0", value_delimiter = ',', allow_hyphen_values = true, default_value = "-10,0,0")]
    pub from: Vec<f64>,
    /// sink state "x,y,θ"
    #[arg(long, visible_alias = "g1", value_delimiter = ',', allow_hyphen_values = true, default_value = "10,0,0")]
    pub to: Vec<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "completion")]
    pub out: String,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum OscoreCommand {
    /// image (PGM or CSV) to orientation score (SKF)
    Transform(OscoreTransformArgs),
    /// orientation score (SKF) to image
    Reconstruct(OscoreReconstructArgs),
    /// transform, convolve with a kernel, reconstruct
    Enhance(OscoreEnhanceArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OscoreTransformArgs {
    #[arg(long)]
    pub input: String,
    #[arg(long = "No", default_value_t = 16)]
    pub no: usize,
    /// disk radius as a fraction of Nyquist
    #[arg(long, default_value_t = 0.9)]
    pub disk: f64,
    #[arg(long, default_value = "score")]
    pub out: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OscoreReconstructArgs {
    #[arg(long)]
    pub input: String,
    #[arg(long, default_value_t = 0.9)]
    pub disk: f64,
    /// use the adjoint instead of the exact inverse
    #[arg(long)]
    pub adjoint: bool,
    /// crop to this size (default: the score's full frame)
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// output image; .csv or .pgm
    #[arg(long, default_value = "reconstructed.pgm")]
    pub out: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OscoreEnhanceArgs {
    #[arg(long)]
    pub input: String,
    #[arg(long = "No", default_value_t = 16)]
    pub no: usize,
    #[arg(long, default_value_t = 0.9)]
    pub disk: f64,
    #[arg(long, default_value = "fbt")]
    pub method: String,
    #[arg(long = "D", value_delimiter = ',', default_value = "1,0,0.05")]
    pub d: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// output image; .csv or .pgm
    #[arg(long, default_value = "enhanced.pgm")]
    pub out: String,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum MathieuCommand {
    /// tabulate ce, se, me± on a real z grid
    Eval(MathieuEvalArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MathieuEvalArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub q: f64,
    #[arg(long = "a-im", default_value_t = 0.0, allow_hyphen_values = true)]
    pub a_im: f64,
    #[arg(long = "q-im", default_value_t = 0.0, allow_hyphen_values = true)]
    pub q_im: f64,
    #[arg(long = "z-from", default_value_t = 0.0, allow_hyphen_values = true)]
    pub z_from: f64,
    #[arg(long = "z-to", default_value_t = std::f64::consts::PI, allow_hyphen_values = true)]
    pub z_to: f64,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value = "mathieu.csv")]
    pub out: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum AsymptoteMode {
    Resolvent,
    Fundamental,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AsymptoticsArgs {
    #[arg(long, value_enum, default_value = "resolvent")]
    pub mode: AsymptoteMode,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long = "rho-from", default_value_t = 2.0)]
    pub rho_from: f64,
    #[arg(long = "rho-to", default_value_t = 10.0)]
    pub rho_to: f64,
    #[arg(long, default_value_t = 17)]
    pub n: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "asymptotics.csv")]
    pub out: String,
}
