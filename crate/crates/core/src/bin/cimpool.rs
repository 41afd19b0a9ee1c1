use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cimpool::cost::{max_params_for_budget, render_table, total_report, Calibration, SchemeSpec};
use cimpool::fixtures;
use cimpool::interchange::compressed::{layer_payload_bits, COMPRESSED_MAGIC};
use cimpool::interchange::tensor::TENSOR_MAGIC;
use cimpool::interchange::{read_compressed, read_manifest, read_tensor, write_compressed, write_tensor, LayerPayload};
use cimpool::mapper::{analytic_trace, run_network, ExecMode, ExecOptions, ExecutionTrace};
use cimpool::weightpool::{compress_model, compression_stats, pack_layer};
use cimpool::{ModelBundle, ModelManifest, Sparsity, TensorRecord};

const DEFAULT_SCHEMES: [&str; 4] = ["8bit", "4bit", "cimpool-0.5", "cimpool-0.875"];

#[derive(Parser)]
#[command(name = "cimpool", version, about = "Weight-pool compression and compute-in-memory simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a `.cmodel` into a `.cpool`.
    Compress(CompressArgs),
    /// Run a `.cpool` on one input tensor.
    Run(RunArgs),
    /// Energy, area and latency estimates.
    Cost(CostArgs),
    /// Print the header and statistics of any file this tool writes.
    Inspect(InspectArgs),
    /// Write the small test models and inputs.
    GenFixtures(GenArgs),
}

#[derive(Args)]
struct Common {
    /// Emit one JSON object on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Args)]
struct CompressArgs {
    model: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    scale_s: Option<f32>,
    /// Keep this layer as float32 (repeatable).
    #[arg(long)]
    exempt: Vec<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdcArg {
    Ideal,
    Saturating,
}

#[derive(Args)]
struct RunArgs {
    model: PathBuf,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "reference")]
    adc: Option<AdcArg>,
    #[arg(long, default_value_t = 8)]
    adc_bits: u32,
    /// Float execution on reconstructed weights instead of the arrays.
    #[arg(long)]
    reference: bool,
    /// Skip the permutation unit (outputs come out in pool-column order).
    #[arg(long, conflicts_with = "reference")]
    no_permute: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("workload").required(true).args(["trace", "manifest"]))]
struct CostArgs {
    /// Trace written by `run --trace`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Model whose counters are computed analytically.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, env = "CIMPOOL_CALIB")]
    calib: Option<PathBuf>,
    /// 8bit, 4bit or cimpool-<sparsity> (repeatable).
    #[arg(long)]
    scheme: Vec<String>,
    /// Override the parameter count used for DRAM and area.
    #[arg(long)]
    params: Option<f64>,
    /// Replace the modeled SRAM energy, in µJ.
    #[arg(long)]
    sram_uj: Option<f64>,
    /// Also report the largest model fitting this chip area, in mm².
    #[arg(long)]
    budget_mm2: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct InspectArgs {
    file: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GenArgs {
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (json, result) = match cli.command {
        Command::Compress(a) => (a.common.json, compress(&a)),
        Command::Run(a) => (a.common.json, run(&a)),
        Command::Cost(a) => (a.common.json, cost(&a)),
        Command::Inspect(a) => (a.common.json, inspect(&a)),
        Command::GenFixtures(a) => (a.common.json, gen_fixtures(&a)),
    };
    match result {
        Ok((value, text)) => {
            let mut out = std::io::stdout().lock();
            let _ = if json { writeln!(out, "{value}") } else { write!(out, "{text}") };
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

type Outcome = Result<(Value, String)>;

fn compress(a: &CompressArgs) -> Outcome {
    let bundle = ModelBundle::load(&a.model).with_context(|| format!("{}", a.model.display()))?;
    let mut config = bundle.manifest.pool_config.clone();
    if let Some(s) = a.sparsity {
        config.sparsity = Sparsity::from_fraction(s).context("--sparsity")?;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(g) = a.group_size {
        config.group_size = g;
    }
    if let Some(s) = a.scale_s {
        config.error_scale = s;
    }
    config.exempt_layers.extend(a.exempt.iter().cloned());
    let model = compress_model(&bundle, &config).with_context(|| format!("compressing {}", a.model.display()))?;
    write_compressed(&model, &a.output).with_context(|| format!("{}", a.output.display()))?;

    let stats = compression_stats(&config);
    let payload_bits: u64 = layer_payload_bits(&model).iter().filter_map(|(_, b)| *b).sum();
    let exempt = model.layers.iter().filter(|l| matches!(l, LayerPayload::Exempt(_))).count();
    let value = json!({
        "output": a.output,
        "layers": model.layers.len(),
        "exempt_layers": exempt,
        "bits_per_vector": stats.bits_per_vector,
        "compression_ratio": stats.compression_ratio_vs_8bit,
        "payload_bits": payload_bits,
        "pool_config": config,
    });
    let text = format!(
        "{}: {} layers ({} exempt), {} bits/vector, {:.2}x\n",
        a.output.display(),
        model.layers.len(),
        exempt,
        stats.bits_per_vector,
        stats.compression_ratio_vs_8bit
    );
    Ok((value, text))
}

fn run(a: &RunArgs) -> Outcome {
    let model = read_compressed(&a.model).with_context(|| format!("{}", a.model.display()))?;
    let input = read_tensor(&a.input).with_context(|| format!("{}", a.input.display()))?;
    let mode = match (a.reference, a.adc) {
        (true, _) => ExecMode::Reference,
        (false, Some(AdcArg::Saturating)) => ExecMode::CimSaturating,
        _ => ExecMode::CimIdeal,
    };
    let options = ExecOptions { mode, adc_bits: a.adc_bits, permute: !a.no_permute, record_activations: false };
    let out = run_network(&model, &input.to_f32(), &options).with_context(|| format!("running {}", a.model.display()))?;
    let values: Vec<f32> = out.output.iter().map(|&v| v as f32).collect();
    let record = TensorRecord::from_f32("output", out.shape.dims(), &values)?;
    write_tensor(&record, &a.output).with_context(|| format!("{}", a.output.display()))?;
    if let Some(path) = &a.trace {
        std::fs::write(path, out.trace.to_json()).with_context(|| format!("{}", path.display()))?;
    }
    let argmax = values.iter().enumerate().fold(0, |best, (i, v)| if *v > values[best] { i } else { best });
    let value = json!({
        "output": a.output,
        "mode": mode,
        "shape": out.shape.dims(),
        "output_lsb": out.output_lsb,
        "argmax": argmax,
        "bit_serial_cycles": out.trace.bit_serial_cycles,
        "logical_macs": out.trace.logical_macs,
    });
    let text = format!(
        "{}: {:?} output, argmax {}, {} MACs, {} cycles\n",
        a.output.display(),
        out.shape.dims(),
        argmax,
        out.trace.logical_macs,
        out.trace.bit_serial_cycles
    );
    Ok((value, text))
}

fn load_calibration(path: Option<&Path>) -> Result<Calibration> {
    match path {
        None => Ok(Calibration::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("--calib {}", p.display()))?;
            Calibration::from_json(&text).with_context(|| format!("--calib {}", p.display()))
        }
    }
}

fn cost(a: &CostArgs) -> Outcome {
    let calib = load_calibration(a.calib.as_deref())?;
    let trace: ExecutionTrace = match (&a.trace, &a.manifest) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("--trace {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("--trace {}", p.display()))?
        }
        (None, Some(p)) => {
            let m: ModelManifest = read_manifest(p).with_context(|| format!("--manifest {}", p.display()))?;
            analytic_trace(&m).with_context(|| format!("--manifest {}", p.display()))?
        }
        (None, None) => bail!("one of --trace or --manifest is required"),
    };
    let names: Vec<&str> =
        if a.scheme.is_empty() { DEFAULT_SCHEMES.to_vec() } else { a.scheme.iter().map(String::as_str).collect() };
    let schemes = names
        .iter()
        .map(|s| s.parse::<SchemeSpec>().with_context(|| format!("--scheme {s}")))
        .collect::<Result<Vec<_>>>()?;
    let n_params = a.params.unwrap_or(trace.n_params as f64);
    let reports: Vec<_> =
        schemes.iter().map(|s| total_report(&trace, n_params, s, &calib.config, a.sram_uj)).collect();
    let mut text = render_table(&reports);
    let mut budget = Vec::new();
    if let Some(b) = a.budget_mm2 {
        for s in &schemes {
            let n = max_params_for_budget(b, s, &calib.config).context("--budget-mm2")?;
            text.push_str(&format!("{s}: at most {:.1}M parameters in {b} mm2\n", n / 1e6));
            budget.push(json!({"scheme": s.name, "max_params": n}));
        }
    }
    let value = json!({ "reports": reports, "budget_mm2": a.budget_mm2, "max_params": budget });
    if let Some(path) = &a.output {
        std::fs::write(path, serde_json::to_string_pretty(&value)?).with_context(|| format!("{}", path.display()))?;
    }
    Ok((value, text))
}

fn inspect(a: &InspectArgs) -> Outcome {
    let path = &a.file;
    let ctx = || format!("{}", path.display());
    if path.is_dir() || path.extension().is_some_and(|e| e == "json") {
        let bundle = ModelBundle::load(path).with_context(ctx)?;
        let m = &bundle.manifest;
        let mut layers = Vec::new();
        for spec in m.layers.iter().filter(|l| l.kind.has_weights()) {
            let w = spec.weight.as_deref().and_then(|n| bundle.tensor(n)).ok_or_else(|| anyhow!("{}: layer `{}` has no weights", path.display(), spec.name))?;
            let packed = pack_layer(spec, w, m.pool_config.vector_size).with_context(ctx)?;
            layers.push(json!({"name": spec.name, "kind": spec.kind.to_string(), "weights": spec.weight_count(), "mav_w": packed.mean_abs_weight()}));
        }
        let value = json!({
            "kind": "model",
            "input_shape": m.input_shape,
            "layers": m.layers.len(),
            "parameters": m.parameter_count(),
            "tensors": m.tensors.len(),
            "violations": 0,
            "pool_config": m.pool_config,
            "weighted_layers": layers,
        });
        let text = format!(
            "model {}: input {:?}, {} layers, {} parameters, 0 violations\n",
            path.display(),
            m.input_shape,
            m.layers.len(),
            m.parameter_count()
        );
        return Ok((value, text));
    }
    let mut magic = [0u8; 8];
    let mut f = std::fs::File::open(path).with_context(ctx)?;
    f.read_exact(&mut magic).map_err(|_| anyhow!("{}: too short to hold a header", path.display()))?;
    if &magic == COMPRESSED_MAGIC {
        let model = read_compressed(path).with_context(ctx)?;
        let stats = compression_stats(model.pool_config());
        let bits = layer_payload_bits(&model);
        let mut text = format!(
            "compressed model {}: sparsity {}, group size {}, seed {}, {} bits/vector, {:.2}x\n",
            path.display(),
            model.sparsity(),
            model.group_size(),
            model.pool_seed(),
            stats.bits_per_vector,
            stats.compression_ratio_vs_8bit
        );
        let mut layers = Vec::new();
        for (l, (_, b)) in model.layers.iter().zip(&bits) {
            let entry = match l {
                LayerPayload::Compressed(cl) => {
                    text.push_str(&format!(
                        "  {}: {} vectors, {} payload bits, mav_w {:e}, mav_e {:e}\n",
                        cl.name,
                        cl.n_vectors(),
                        b.unwrap_or(0),
                        cl.scales.mav_w,
                        cl.scales.mav_e
                    ));
                    json!({"name": cl.name, "storage": "compressed", "vectors": cl.n_vectors(), "payload_bits": b, "scales": cl.scales})
                }
                LayerPayload::Exempt(e) => {
                    text.push_str(&format!("  {}: float32, {} weights\n", e.name, e.weights.len()));
                    json!({"name": e.name, "storage": "float32", "weights": e.weights.len()})
                }
            };
            layers.push(entry);
        }
        let value = json!({
            "kind": "compressed",
            "pool_config": model.pool_config(),
            "bits_per_vector": stats.bits_per_vector,
            "compression_ratio": stats.compression_ratio_vs_8bit,
            "layers": layers,
        });
        Ok((value, text))
    } else if &magic == TENSOR_MAGIC {
        let t = read_tensor(path).with_context(ctx)?;
        let value = json!({"kind": "tensor", "name": t.name, "dtype": t.dtype, "shape": t.shape});
        let text = format!("tensor {}: `{}` {} {:?}\n", path.display(), t.name, t.dtype, t.shape);
        Ok((value, text))
    } else {
        bail!("{}: unrecognized file (magic {:?})", path.display(), String::from_utf8_lossy(&magic))
    }
}

fn gen_fixtures(a: &GenArgs) -> Outcome {
    let dir = &a.output;
    std::fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
    let mut written = Vec::new();
    for (name, bundle) in [("toy_mlp", fixtures::toy_mlp(a.seed)), ("tiny_cnn", fixtures::tiny_cnn(a.seed))] {
        let model = dir.join(format!("{name}.cmodel"));
        bundle.save(&model).with_context(|| format!("{}", model.display()))?;
        let shape = bundle.manifest.input_shape.clone();
        let numel = shape.iter().product();
        let input = TensorRecord::from_f32("input", shape, &fixtures::random_input(numel, a.seed))?;
        let input_path = dir.join(format!("{name}_input.cwt"));
        write_tensor(&input, &input_path).with_context(|| format!("{}", input_path.display()))?;
        written.push(model);
        written.push(input_path);
    }
    let text: String = written.iter().map(|p| format!("{}\n", p.display())).collect();
    Ok((json!({ "written": written, "seed": a.seed }), text))
}
