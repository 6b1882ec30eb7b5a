use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use keynet_core::analysis::{self, Probes, SsimParams};
use keynet_core::exec::Exec;
use keynet_core::imageio;
use keynet_core::keynet::{
    self, assign_keys, build_keynet, memory_stats, sparsity_audit, verify_homomorphism, EncodedImage, KeyChain,
    KeyedNetwork,
};
use keynet_core::keys::{gen_key, KeyGenConfig};
use keynet_core::netir::{self, lower_network, zoo, Tensor3};
use keynet_core::sensor::{
    self, simulate_fiber_bundle, CmosConfig, FiberBundleConfig, NoiseMode, RealizeMode,
};
use keynet_core::store;
use keynet_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::run::{load_image_key, load_model, record_model, RunManifest};

pub struct Outcome {
    pub manifest: RunManifest,
    pub result: Value,
    pub ok: bool,
    pub summary: String,
}

fn params<T: Serialize>(a: &T) -> Value {
    serde_json::to_value(a).expect("arguments serialize")
}

fn done(manifest: RunManifest, result: impl Serialize, ok: bool, summary: String) -> Result<Outcome> {
    Ok(Outcome {
        manifest,
        result: serde_json::to_value(result)?,
        ok,
        summary,
    })
}

#[derive(Debug, Args, Serialize)]
pub struct KeygenArgs {
    /// Model path or `zoo:<name>[:<seed>]`; writes a key chain.
    #[arg(long, conflicts_with = "dim", required_unless_present = "dim")]
    pub model: Option<String>,
    /// Key dimension; writes a single key.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub alpha: usize,
    #[arg(long)]
    pub seed: u64,
    /// Use the identity as output key.
    #[arg(long)]
    pub public_output: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn keygen(a: KeygenArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("keygen", params(&a));
    m.seed("keys", a.seed);
    let result = if let Some(dim) = a.dim {
        let key = gen_key(&KeyGenConfig::new(dim, a.alpha, a.seed))?;
        key.save(&a.out)?;
        json!({ "dim": dim, "alpha": key.alpha(), "fingerprint": key.fingerprint() })
    } else {
        let spec = a.model.as_deref().expect("clap enforces model or dim");
        record_model(&mut m, spec)?;
        let chain = assign_keys(&load_model(spec)?, a.alpha, a.seed, a.public_output)?;
        chain.save(&a.out)?;
        json!({
            "boundaries": chain.keys().len(),
            "alpha": chain.alpha(),
            "fingerprint": chain.image_key().fingerprint(),
        })
    };
    m.output(&a.out)?;
    let summary = format!("keys written to {}", a.out.display());
    done(m, result, true, summary)
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    /// Key chain or single key directory.
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn encode(a: EncodeArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("encode", params(&a));
    m.input(&a.keys)?;
    m.input(&a.input)?;
    let key = load_image_key(&a.keys)?;
    let img = imageio::load_image(&a.input)?;
    let enc = EncodedImage {
        data: key.apply(&netir::vectorize(&img))?,
        shape: img.shape,
        fingerprint: key.fingerprint(),
    };
    imageio::write_encoded(&a.out, &enc)?;
    m.output(&a.out)?;
    let summary = format!("encoded {} image under key {}", img.shape, &enc.fingerprint[..12]);
    done(m, json!({ "shape": img.shape, "fingerprint": enc.fingerprint }), true, summary)
}

#[derive(Debug, Args, Serialize)]
pub struct DecodeImageArgs {
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn decode_image(a: DecodeImageArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("decode-image", params(&a));
    m.input(&a.keys)?;
    m.input(&a.input)?;
    let key = load_image_key(&a.keys)?;
    let enc = imageio::read_encoded(&a.input)?;
    if enc.fingerprint != key.fingerprint() {
        return Err(Error::WrongSensor {
            expected: key.fingerprint(),
            found: enc.fingerprint,
        }
        .into());
    }
    let img = netir::devectorize(&key.unapply(&enc.data)?, enc.shape)?;
    imageio::save_image(&a.out, &img)?;
    m.output(&a.out)?;
    let summary = format!("decoded {} image to {}", img.shape, a.out.display());
    done(m, json!({ "shape": img.shape }), true, summary)
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 1)]
    pub alpha: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub public_output: bool,
    /// Store layers in the tiled format.
    #[arg(long)]
    pub tiled: bool,
    #[arg(long, default_value_t = keynet_core::sparsekit::DEFAULT_TILE_SIZE)]
    pub tile_size: usize,
    /// Keynet container directory (public).
    #[arg(long)]
    pub out: PathBuf,
    /// Key chain directory (secret).
    #[arg(long)]
    pub keys_out: PathBuf,
}

pub fn build(a: BuildArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("build", params(&a));
    m.seed("keys", a.seed);
    record_model(&mut m, &a.model)?;
    if a.out == a.keys_out {
        bail!("--out and --keys-out must differ; keys never go into the keynet container");
    }
    let net = load_model(&a.model)?;
    let lowered = lower_network(&net)?;
    let chain = assign_keys(&net, a.alpha, a.seed, a.public_output)?;
    let kn = build_keynet(&lowered, &chain)?;
    kn.save(&a.out, a.tiled.then_some(a.tile_size))?;
    chain.save(&a.keys_out)?;
    m.output(&a.out)?;
    m.output(&a.keys_out)?;
    let audit = sparsity_audit(&kn, &lowered, &chain)?;
    let summary = format!(
        "built {} keyed layers (alpha {}), fill bound {}",
        kn.layers.len(),
        a.alpha,
        if audit.holds { "holds" } else { "VIOLATED" }
    );
    let result = json!({
        "layers": kn.layers.len(),
        "fingerprint": kn.fingerprint,
        "input_shape": kn.input_shape,
        "output_shape": kn.output_shape,
        "sparsity": audit,
    });
    done(m, result, audit.holds, summary)
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub keynet: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write `{"output": [...]}` here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn infer(a: InferArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("infer", params(&a));
    m.input(&a.keynet)?;
    m.input(&a.input)?;
    let kn = KeyedNetwork::load(&a.keynet)?;
    let enc = imageio::read_encoded(&a.input)?;
    let y = keynet::keyed_forward(&kn, &enc)?;
    let result = json!({ "output": y });
    if let Some(out) = &a.out {
        store::write_json(out, &result)?;
        m.output(out)?;
    }
    done(m, result, true, format!("keyed output of length {}", y.len()))
}

#[derive(Debug, Args, Serialize)]
pub struct DecodeArgs {
    #[arg(long)]
    pub keys: PathBuf,
    /// JSON array or `{"output": [...]}` as written by `infer`.
    #[arg(long = "in")]
    pub input: PathBuf,
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let v: Value = store::read_json(path)?;
    let arr = v.get("output").cloned().unwrap_or(v);
    serde_json::from_value(arr).with_context(|| format!("{} holds no output vector", path.display()))
}

pub fn decode(a: DecodeArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("decode", params(&a));
    m.input(&a.keys)?;
    m.input(&a.input)?;
    let chain = KeyChain::load(&a.keys)?;
    let y = keynet::decode_output(&chain, &read_vector(&a.input)?)?;
    let body = &y[..y.len() - 1];
    let argmax = body
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i);
    let summary = match argmax {
        Some(i) => format!("decoded output, argmax {i}"),
        None => "decoded empty output".to_string(),
    };
    done(m, json!({ "output": body, "argmax": argmax }), true, summary)
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub keynet: PathBuf,
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub seed: u64,
}

pub fn verify(a: VerifyArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("verify", params(&a));
    m.seed("inputs", a.seed);
    record_model(&mut m, &a.model)?;
    m.input(&a.keynet)?;
    m.input(&a.keys)?;
    let lowered = lower_network(&load_model(&a.model)?)?;
    let chain = KeyChain::load(&a.keys)?;
    let (kn, integrity) = match KeyedNetwork::load_unverified(&a.keynet) {
        Ok(v) => v,
        Err(e) => {
            let summary = format!("keynet failed to load: {e}");
            return done(m, json!({ "passed": false, "load_error": e.to_string() }), false, summary);
        }
    };
    let digest_fail = integrity.iter().find(|i| !i.digest_ok).map(|i| i.layer);
    let hom = verify_homomorphism(&lowered, &kn, &chain, a.trials, a.tol, a.seed)?;
    let passed = digest_fail.is_none() && hom.passed;
    let failing_layer = digest_fail.or(hom.failing_layer);
    let summary = match failing_layer {
        None => format!("verified: max relative error {:.3e} over {} trials", hom.max_rel_error, a.trials),
        Some(l) => format!("FAILED at layer {l}: max relative error {:.3e}", hom.max_rel_error),
    };
    let result = json!({
        "passed": passed,
        "failing_layer": failing_layer,
        "integrity": integrity,
        "homomorphism": hom,
    });
    done(m, result, passed, summary)
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub keynet: PathBuf,
    #[arg(long, default_value_t = keynet_core::sparsekit::DEFAULT_TILE_SIZE)]
    pub tile_size: usize,
}

pub fn stats(a: StatsArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("stats", params(&a));
    record_model(&mut m, &a.model)?;
    m.input(&a.keynet)?;
    let lowered = lower_network(&load_model(&a.model)?)?;
    let kn = KeyedNetwork::load(&a.keynet)?;
    let mem = memory_stats(&kn, &lowered, a.tile_size)?;
    let bound = (kn.alpha * kn.alpha) as f64;
    let within = mem.layers.iter().all(|l| l.ratio <= bound);
    let summary = format!(
        "keyed/plain nnz {}/{} ({:.2}x); COO {} B, tiled {} B",
        mem.keyed_nnz,
        mem.plain_nnz,
        mem.keyed_nnz as f64 / mem.plain_nnz.max(1) as f64,
        mem.coo_bytes,
        mem.tiled_bytes
    );
    done(m, json!({ "alpha": kn.alpha, "ratio_within_alpha_sq": within, "memory": mem }), true, summary)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RealizeArg {
    Exact,
    Approximate,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output image. `.pgm` gets ADC counts; anything else gets raw `f64`
    /// (an encoded image when `--key` is given).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, conflicts_with = "key")]
    pub fiber_cfg: Option<PathBuf>,
    #[arg(long)]
    pub cmos_cfg: Option<PathBuf>,
    /// Realize this key (single key or chain) in the optics.
    #[arg(long)]
    pub key: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RealizeArg::Exact)]
    pub realize: RealizeArg,
    /// Photons per unit intensity when no key is realized.
    #[arg(long, default_value_t = 1000.0)]
    pub photon_scale: f64,
    /// Disable noise and return expected values.
    #[arg(long)]
    pub mean: bool,
    /// Also write the report JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("simulate", params(&a));
    m.seed("noise", a.seed);
    m.input(&a.input)?;
    for p in [&a.fiber_cfg, &a.cmos_cfg, &a.key].into_iter().flatten() {
        m.input(p)?;
    }
    let img = imageio::load_image(&a.input)?;
    let noise = if a.mean { NoiseMode::Mean } else { NoiseMode::Stochastic };
    let cmos: CmosConfig = match &a.cmos_cfg {
        Some(p) => store::read_json(p)?,
        None => CmosConfig::ideal(img.shape),
    };
    let pgm = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let mut report = serde_json::Map::new();
    let counts = if let Some(kdir) = &a.key {
        let key = load_image_key(kdir)?;
        let mode = match a.realize {
            RealizeArg::Exact => RealizeMode::Exact,
            RealizeArg::Approximate => RealizeMode::Approximate,
        };
        let r = sensor::realize_key(&key, &cmos, mode)?;
        let counts = sensor::simulate_pipeline(&img, &r, a.seed, noise, Exec::default())?;
        if !pgm {
            let enc = sensor::pipeline_encode(&img, &r, a.seed, noise)?;
            imageio::write_encoded(&a.out, &enc)?;
            let ideal = key.apply(&netir::vectorize(&img))?;
            let err = ideal.iter().zip(&enc.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            report.insert("max_encoding_error".into(), json!(err));
        }
        report.insert("exact".into(), json!(r.exact));
        report.insert("mixing_residual".into(), json!(r.mixing_residual));
        report.insert("photon_scale".into(), json!(r.photon_scale));
        report.insert("fingerprint".into(), json!(r.fingerprint));
        counts
    } else {
        let fiber: FiberBundleConfig = match &a.fiber_cfg {
            Some(p) => store::read_json(p)?,
            None => FiberBundleConfig::identity(img.shape),
        };
        let optical = simulate_fiber_bundle(&img, &fiber, a.seed)?;
        let photons = Tensor3::new(optical.shape, optical.data.iter().map(|v| v * a.photon_scale).collect())?;
        report.insert("photon_scale".into(), json!(a.photon_scale));
        let counts = sensor::simulate_cmos(&photons, &cmos, a.seed, noise, Exec::default())?;
        if !pgm {
            imageio::write_raw(&a.out, &counts, None)?;
        }
        counts
    };
    if pgm {
        imageio::write_pgm(&a.out, &counts, cmos.adc_max() as u16)?;
    }
    m.output(&a.out)?;
    let n = counts.data.len() as f64;
    let mean = counts.data.iter().sum::<f64>() / n;
    let min = counts.data.iter().copied().fold(f64::INFINITY, f64::min);
    let max = counts.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report.insert("shape".into(), json!(img.shape));
    report.insert("noise".into(), json!(noise));
    report.insert("counts".into(), json!({ "min": min, "max": max, "mean": mean }));
    report.insert("adc_bits".into(), json!(cmos.adc_bits));
    let report = Value::Object(report);
    if let Some(p) = &a.report {
        store::write_json(p, &report)?;
        m.output(p)?;
    }
    let summary = format!("simulated {} image, counts in [{min}, {max}]", img.shape);
    done(m, report, true, summary)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeArg {
    Basis,
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct AttackArgs {
    /// Key or chain directory used as the encryption oracle.
    #[arg(long, conflicts_with = "keynet", required_unless_present = "keynet")]
    pub key: Option<PathBuf>,
    /// Dump per-layer nonzero structure of a keynet instead.
    #[arg(long)]
    pub keynet: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ProbeArg::Basis)]
    pub probes: ProbeArg,
    /// Number of random probes.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub seed: u64,
}

pub fn attack(a: AttackArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("attack", params(&a));
    m.seed("probes", a.seed);
    if let Some(dir) = &a.keynet {
        m.input(dir)?;
        let kn = KeyedNetwork::load(dir)?;
        let layers: Vec<Value> = kn
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let block = l.affine().linear_block();
                let mut hist = std::collections::BTreeMap::<usize, usize>::new();
                for c in block.row_nnz() {
                    *hist.entry(c).or_default() += 1;
                }
                json!({
                    "layer": i,
                    "kind": l.kind(),
                    "rows": block.rows(),
                    "cols": block.cols(),
                    "nnz": block.nnz(),
                    "row_nnz_histogram": hist,
                })
            })
            .collect();
        let summary = format!("structure of {} keyed layers", layers.len());
        return done(m, json!({ "layers": layers }), true, summary);
    }
    let dir = a.key.as_ref().ok_or_else(|| anyhow!("--key or --keynet required"))?;
    m.input(dir)?;
    let key = load_image_key(dir)?;
    let probes = match a.probes {
        ProbeArg::Basis => Probes::Basis,
        ProbeArg::Random => Probes::Random {
            n: a.n.unwrap_or(2 * (key.dim() + 1)),
        },
    };
    let res = analysis::chosen_plaintext_attack(analysis::key_oracle(&key), key.dim(), probes, a.seed, a.tol)?;
    let exact = res.recovered.bit_eq(key.forward());
    let summary = format!(
        "recovered dim-{} key from {} probes, residual {:.3e}",
        key.dim(),
        res.probes,
        res.residual
    );
    let result = json!({
        "dim": key.dim(),
        "alpha": key.alpha(),
        "probes": res.probes,
        "residual": res.residual,
        "success": res.success,
        "bitwise_equal": exact,
    });
    done(m, result, true, summary)
}

#[derive(Debug, Args, Serialize)]
pub struct SsimArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub window: usize,
    #[arg(long, default_value_t = 1.0)]
    pub dynamic_range: f64,
}

pub fn ssim(a: SsimArgs) -> Result<Outcome> {
    let mut m = RunManifest::new("ssim", params(&a));
    m.input(&a.reference)?;
    m.input(&a.test)?;
    let load = |p: &Path| -> Result<Tensor3> {
        Ok(match imageio::read_encoded(p) {
            Ok(e) => netir::devectorize(&e.data, e.shape)?,
            Err(_) => imageio::load_image(p)?,
        })
    };
    let p = SsimParams {
        window: a.window,
        ..SsimParams::standard(a.dynamic_range)
    };
    let s = analysis::ssim(&load(&a.reference)?, &load(&a.test)?, &p)?;
    done(m, json!({ "ssim": s, "params": p }), true, format!("ssim {s:.4}"))
}

#[derive(Debug, Args, Serialize)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 2)]
    pub alpha: usize,
    #[arg(long)]
    pub seed: u64,
    /// Keep the keynet, keys and encoded image here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn demo(a: DemoArgs) -> Result<Outcome> {
    const TOL: f64 = 1e-9;
    let mut m = RunManifest::new("demo", params(&a));
    m.seed("keys", a.seed);
    let net = zoo::keynet_example();
    let lowered = lower_network(&net)?;
    let chain = assign_keys(&net, a.alpha, a.seed, false)?;
    let kn = build_keynet(&lowered, &chain)?;
    let img = Tensor3::from_nested(&[vec![vec![11.0, 12.0], vec![21.0, 22.0]]])?;
    let enc = keynet::encode_image(&img, &chain)?;
    let y_hat = keynet::keyed_forward(&kn, &enc)?;
    let y = keynet::decode_output(&chain, &y_hat)?;
    let plain = lowered.forward(&netir::vectorize(&img))?;
    let out_err = y.iter().zip(&plain).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let back = keynet::decode_image(&enc, &chain)?;
    let img_err = back.data.iter().zip(&img.data).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let hom = verify_homomorphism(&lowered, &kn, &chain, 100, TOL, a.seed)?;
    if let Some(dir) = &a.out {
        let (kdir, sdir, edir) = (dir.join("keynet"), dir.join("keys"), dir.join("image.enc"));
        std::fs::create_dir_all(dir)?;
        kn.save(&kdir, None)?;
        chain.save(&sdir)?;
        imageio::write_encoded(&edir, &enc)?;
        for p in [&kdir, &sdir, &edir] {
            m.output(p)?;
        }
    }
    let ok = hom.passed && out_err <= TOL && img_err <= TOL;
    let summary = format!(
        "demo alpha {}: plain {:?}, decoded {:?}, {}",
        a.alpha,
        &plain[..plain.len() - 1],
        &y[..y.len() - 1],
        if ok { "ok" } else { "MISMATCH" }
    );
    let result = json!({
        "input": img.data,
        "plain_output": &plain[..plain.len() - 1],
        "keyed_output": y_hat,
        "decoded_output": &y[..y.len() - 1],
        "output_error": out_err,
        "image_roundtrip_error": img_err,
        "homomorphism": hom,
        "passed": ok,
    });
    done(m, result, ok, summary)
}
