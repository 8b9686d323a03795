use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lutnet_core::data::{load_dataset, DataFormat, SplitOptions};
use lutnet_core::rtl::{emit_testbench, parse_rtl, rtl_file_names, TestVector};
use lutnet_core::sim::{equivalence_inputs, EquivalenceOptions};
use lutnet_core::tablegen::TableOptions;
use lutnet_core::train::{train_with, Hyper};
use lutnet_core::{
    audit_tables, check_equivalence, compile_network, emit_rtl, eval_netlist, latency_report, parse_config, preset,
    resource_report, simulate_pipeline, validate_config, LayerGeometry, Netlist, NetworkConfig, PipelineStrategy,
    ResourceReport, TrainedNetwork,
};

use crate::manifest::RunManifest;
use crate::{
    parse_strategy, CheckArgs, CliError, Command, CompileArgs, ConfigArgs, DataArgs, EmitArgs, HyperArgs,
    PipelineArgs, ReportArgs, RerunArgs, SimulateArgs, TrainArgs, VerifyArgs,
};

const MODEL_FILE: &str = "model.json";
const NETLIST_FILE: &str = "netlist.json";
const RTL_DIR: &str = "rtl";

pub fn run(command: Command, args: &[String]) -> Result<(), CliError> {
    match command {
        Command::Train(a) => cmd_train(a, args),
        Command::Compile(a) => cmd_compile(a, args),
        Command::Emit(a) => cmd_emit(a, args),
        Command::Simulate(a) => cmd_simulate(a, args),
        Command::Verify(a) => cmd_verify(a, args),
        Command::Report(a) => cmd_report(a),
        Command::Pipeline(a) => cmd_pipeline(a, args),
        Command::Rerun(a) => cmd_rerun(a),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_model(path: &Path) -> Result<TrainedNetwork, CliError> {
    Ok(TrainedNetwork::from_json(&read_file(path)?)?)
}

fn load_netlist(path: &Path) -> Result<Netlist, CliError> {
    Ok(Netlist::from_json(&read_file(path)?)?)
}

struct Resolved {
    config: NetworkConfig,
    preset: Option<String>,
    path: Option<String>,
}

fn apply_overrides(
    cfg: &mut NetworkConfig,
    adder: Option<usize>,
    degree: Option<u32>,
    fanin: Option<usize>,
    beta: Option<u32>,
) {
    if let Some(a) = adder {
        cfg.adder = a;
    }
    if let Some(d) = degree {
        cfg.degree = d;
    }
    if let Some(f) = fanin {
        cfg.fanin = f;
    }
    if let Some(b) = beta {
        cfg.beta = b;
    }
}

fn base_config(preset_name: Option<&str>, path: Option<&Path>) -> Result<NetworkConfig, CliError> {
    match (preset_name, path) {
        (Some(name), _) => Ok(preset(name)?),
        (None, Some(p)) => {
            let text = read_file(p)?;
            parse_config(&text).map_err(|e| match e {
                lutnet_core::Error::Parse { line, msg, .. } => {
                    lutnet_core::Error::Parse { path: p.display().to_string(), line, msg }.into()
                }
                other => other.into(),
            })
        }
        (None, None) => Err(CliError::Usage("one of --preset or --config is required".into())),
    }
}

fn resolve(args: &ConfigArgs) -> Result<Resolved, CliError> {
    let mut config = base_config(args.preset.as_deref(), args.config.as_deref())?;
    apply_overrides(&mut config, args.adder, args.degree, args.fanin, args.beta);
    if let Some(s) = args.seed {
        config.seed = s;
    }
    Ok(Resolved {
        config,
        preset: args.preset.clone(),
        path: args.config.as_ref().map(|p| p.display().to_string()),
    })
}

fn hyper_for(cfg: &NetworkConfig, h: &HyperArgs) -> Hyper {
    let mut hyper = Hyper::for_config(cfg);
    hyper.seed = cfg.seed;
    if let Some(e) = h.epochs {
        hyper.epochs = e;
    }
    if let Some(b) = h.batch_size {
        hyper.batch_size = b;
    }
    if let Some(lr) = h.lr {
        hyper.learning_rate = lr;
    }
    if let Some(wd) = h.weight_decay {
        hyper.weight_decay = wd;
    }
    hyper
}

fn data_format(name: Option<&str>) -> Result<Option<DataFormat>, CliError> {
    name.map(|f| match f {
        "idx-images" => Ok(DataFormat::IdxImages),
        "csv-tabular" => Ok(DataFormat::CsvTabular),
        "synthetic" => Ok(DataFormat::Synthetic),
        other => Err(CliError::Usage(format!("unknown data format `{other}`"))),
    })
    .transpose()
}

struct TrainStage<'a> {
    config: &'a ConfigArgs,
    data: &'a DataArgs,
    hyper: &'a HyperArgs,
    strategy: Option<PipelineStrategy>,
}

fn stage_train(t: TrainStage<'_>, out_dir: &Path, manifest: &mut RunManifest) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let resolved = resolve(t.config)?;
    let mut cfg = resolved.config;
    if let Some(s) = t.strategy {
        cfg.pipeline_strategy = s;
    }
    let split = SplitOptions { test_fraction: t.data.test_fraction, seed: t.data.split_seed };
    let data = load_dataset(&t.data.data, data_format(t.data.format.as_deref())?, &split)?;
    if data.width != cfg.input_width {
        eprintln!("note: input width {} taken from the dataset (configured {})", data.width, cfg.input_width);
        cfg.input_width = data.width;
    }
    let cfg = validate_config(&cfg)?;
    let hyper = hyper_for(&cfg, t.hyper);
    let net = train_with(&cfg, &data, &hyper, |s| {
        if s.epoch == 0 || (s.epoch + 1) % 10 == 0 || s.epoch + 1 == hyper.epochs {
            eprintln!("epoch {:>4}  loss {:.5}", s.epoch + 1, s.mean_loss);
        }
    })?;
    let path = out_dir.join(MODEL_FILE);
    write_file(&path, &net.to_json())?;
    manifest.preset = resolved.preset;
    manifest.config_path = resolved.path;
    manifest.seed = Some(cfg.seed);
    manifest.record(out_dir, &path)?;
    manifest.time("train", start.elapsed().as_secs_f64());
    let pct = |a: Option<f64>| a.map_or("n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
    println!(
        "trained {} on {} ({} train / {} test): train {} test {}",
        cfg.name,
        data.name,
        data.train.len(),
        data.test.len(),
        pct(net.meta.train_accuracy),
        pct(net.meta.test_accuracy)
    );
    Ok(path)
}

fn stage_compile(model: &Path, cap_bits: u32, out_dir: &Path, manifest: &mut RunManifest) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let net = load_model(model)?;
    let netlist = compile_network(&net, TableOptions { cap_bits })?;
    let path = out_dir.join(NETLIST_FILE);
    write_file(&path, &netlist.to_json())?;
    manifest.seed = Some(net.config.seed);
    manifest.record(out_dir, &path)?;
    manifest.time("compile", start.elapsed().as_secs_f64());
    println!(
        "compiled {}: {} tables, {} entries",
        netlist.name,
        netlist.tables().count(),
        netlist.materialized_entries()
    );
    Ok(path)
}

fn test_vectors(netlist: &Netlist, count: usize, seed: u64) -> Result<Vec<TestVector>, CliError> {
    let opts = EquivalenceOptions { exhaustive_bits: 0, samples: count, seed, ..Default::default() };
    let (_, inputs) = equivalence_inputs(netlist, &opts);
    inputs
        .into_iter()
        .map(|input| Ok(TestVector { output: eval_netlist(netlist, &input)?, input }))
        .collect()
}

fn stage_emit(
    netlist_path: &Path,
    strategy: PipelineStrategy,
    vectors: usize,
    seed: u64,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let netlist = load_netlist(netlist_path)?;
    let dir = out_dir.join(RTL_DIR);
    create_dir(&dir)?;
    let bundle = emit_rtl(&netlist, strategy);
    for file in &bundle.files {
        let path = dir.join(&file.name);
        write_file(&path, &file.text)?;
        manifest.record(out_dir, &path)?;
    }
    let tb = emit_testbench(&netlist, strategy, &test_vectors(&netlist, vectors, seed)?)?;
    let path = dir.join(&tb.name);
    write_file(&path, &tb.text)?;
    manifest.record(out_dir, &path)?;
    manifest.time("emit", start.elapsed().as_secs_f64());
    println!(
        "emitted {} modules and {} ({} strategy, latency {} cycles) into {}",
        bundle.files.len(),
        tb.name,
        strategy,
        netlist.latency(strategy),
        dir.display()
    );
    Ok(dir)
}

/// Layer modules in order, then the top module.
fn read_rtl(dir: &Path, netlist: &Netlist) -> Result<String, CliError> {
    let names = rtl_file_names(netlist);
    let mut text = String::new();
    for name in names {
        text.push_str(&read_file(&dir.join(name))?);
    }
    Ok(text)
}

fn stage_verify(
    model: &Path,
    netlist_path: &Path,
    rtl_dir: &Path,
    strategy: Option<PipelineStrategy>,
    check: &CheckArgs,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let start = Instant::now();
    let net = load_model(model)?;
    let netlist = load_netlist(netlist_path)?;
    let rtl = read_rtl(rtl_dir, &netlist)?;
    let strategy = match strategy {
        Some(s) => s,
        None => parse_rtl(&rtl)?.strategy,
    };
    let audit = audit_tables(&net, &netlist)?;
    let opts = EquivalenceOptions {
        exhaustive_bits: check.exhaustive_bound,
        samples: check.samples,
        seed: check.sample_seed,
        strategy,
    };
    let report = check_equivalence(&net, &netlist, &rtl, &opts)?;
    let path = out_dir.join("verify.json");
    let doc = serde_json::json!({ "tables": audit, "equivalence": report });
    write_file(&path, &(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"))?;
    manifest.record(out_dir, &path)?;
    manifest.time("verify", start.elapsed().as_secs_f64());
    println!(
        "tables: {} units, {} entries recomputed, {} mismatches, {} wiring mismatches",
        audit.units,
        audit.entries_checked,
        audit.mismatches.len(),
        audit.wiring_mismatches.len()
    );
    println!(
        "equivalence ({}, {} strategy): {} inputs, {} mismatches, latency {} cycles",
        if report.exhaustive { "exhaustive" } else { "sampled" },
        strategy,
        report.inputs_checked,
        report.mismatches,
        report.pipeline_latency
    );
    if let Some(err) = &report.rtl_error {
        return Err(CliError::Mismatch(format!("RTL did not parse back: {err}")));
    }
    if !audit.pass() {
        return Err(CliError::Mismatch(format!(
            "{} table entries and {} unit wirings disagree with the model",
            audit.mismatches.len(),
            audit.wiring_mismatches.len()
        )));
    }
    if !report.pass {
        let first = report
            .counterexamples
            .first()
            .map(|c| format!("; first at input {:?} ({:?})", c.input, c.check))
            .unwrap_or_default();
        return Err(CliError::Mismatch(format!(
            "{} of {} inputs disagree, {} RTL tables differ{first}",
            report.mismatches,
            report.inputs_checked,
            report.table_mismatches.len()
        )));
    }
    Ok(())
}

fn finish(manifest: &RunManifest, out_dir: &Path) -> Result<(), CliError> {
    let path = manifest.save(out_dir)?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

fn cmd_train(a: TrainArgs, args: &[String]) -> Result<(), CliError> {
    let out_dir = &a.out.out_dir;
    create_dir(out_dir)?;
    let mut manifest = RunManifest::new("train", args);
    let stage = TrainStage { config: &a.config, data: &a.data, hyper: &a.hyper, strategy: parse_strategy(&a.strategy)? };
    stage_train(stage, out_dir, &mut manifest)?;
    finish(&manifest, out_dir)
}

fn cmd_compile(a: CompileArgs, args: &[String]) -> Result<(), CliError> {
    let out_dir = &a.out.out_dir;
    create_dir(out_dir)?;
    let mut manifest = RunManifest::new("compile", args);
    let model = a.model.unwrap_or_else(|| out_dir.join(MODEL_FILE));
    stage_compile(&model, a.cap_bits, out_dir, &mut manifest)?;
    finish(&manifest, out_dir)
}

fn cmd_emit(a: EmitArgs, args: &[String]) -> Result<(), CliError> {
    let out_dir = &a.out.out_dir;
    create_dir(out_dir)?;
    let mut manifest = RunManifest::new("emit", args);
    let netlist = a.netlist.unwrap_or_else(|| out_dir.join(NETLIST_FILE));
    let strategy = parse_strategy(&a.strategy)?.unwrap_or_default();
    stage_emit(&netlist, strategy, a.vectors, a.seed, out_dir, &mut manifest)?;
    finish(&manifest, out_dir)
}

fn cmd_simulate(a: SimulateArgs, args: &[String]) -> Result<(), CliError> {
    let out_dir = &a.out.out_dir;
    create_dir(out_dir)?;
    let start = Instant::now();
    let mut manifest = RunManifest::new("simulate", args);
    let netlist = load_netlist(&a.netlist.unwrap_or_else(|| out_dir.join(NETLIST_FILE)))?;
    let strategy = parse_strategy(&a.strategy)?.unwrap_or_default();
    if a.items == 0 {
        return Err(CliError::Usage("--items must be positive".into()));
    }
    let opts = EquivalenceOptions { exhaustive_bits: 0, samples: a.items, seed: a.seed, ..Default::default() };
    let (_, inputs) = equivalence_inputs(&netlist, &opts);
    let trace = simulate_pipeline(&netlist, strategy, &inputs)?;
    let path = out_dir.join(format!("simulate-{strategy}.json"));
    let outputs: Vec<_> = trace
        .outputs
        .iter()
        .map(|(cycle, item, words)| serde_json::json!({ "item": item, "cycle": cycle, "input": inputs[*item], "output": words }))
        .collect();
    let doc = serde_json::json!({
        "strategy": strategy,
        "latency_cycles": trace.latency_cycles,
        "outputs": outputs,
    });
    write_file(&path, &(serde_json::to_string_pretty(&doc).expect("trace serializes") + "\n"))?;
    manifest.record(out_dir, &path)?;
    manifest.time("simulate", start.elapsed().as_secs_f64());
    println!("{} layers, {} strategy: latency {} cycles", netlist.layers.len(), strategy, trace.latency_cycles);
    if let Some(period) = a.period_ns {
        let l = latency_report(&netlist, strategy, period)?;
        println!("at {} ns per cycle: {} ns", l.clock_period_ns, l.latency_ns);
    }
    for (cycle, item, words) in &trace.outputs {
        println!("cycle {cycle:>4}: item {item} -> {words:?}");
    }
    finish(&manifest, out_dir)
}

fn cmd_verify(a: VerifyArgs, args: &[String]) -> Result<(), CliError> {
    let out_dir = &a.out.out_dir;
    create_dir(out_dir)?;
    let mut manifest = RunManifest::new("verify", args);
    let model = a.model.unwrap_or_else(|| out_dir.join(MODEL_FILE));
    let netlist = a.netlist.unwrap_or_else(|| out_dir.join(NETLIST_FILE));
    let rtl_dir = a.rtl_dir.unwrap_or_else(|| out_dir.join(RTL_DIR));
    let result = stage_verify(&model, &netlist, &rtl_dir, parse_strategy(&a.strategy)?, &a.check, out_dir, &mut manifest);
    finish(&manifest, out_dir)?;
    result
}

fn cmd_pipeline(a: PipelineArgs, args: &[String]) -> Result<(), CliError> {
    let out_dir = &a.out.out_dir;
    create_dir(out_dir)?;
    let mut manifest = RunManifest::new("pipeline", args);
    let strategy = parse_strategy(&a.strategy)?;
    let stage = TrainStage { config: &a.config, data: &a.data, hyper: &a.hyper, strategy };
    let model = stage_train(stage, out_dir, &mut manifest)?;
    let netlist = stage_compile(&model, lutnet_core::tablegen::DEFAULT_CAP_BITS, out_dir, &mut manifest)?;
    let strategy = match strategy {
        Some(s) => s,
        None => load_model(&model)?.config.pipeline_strategy,
    };
    let rtl = stage_emit(&netlist, strategy, a.vectors, 0, out_dir, &mut manifest)?;
    let result = stage_verify(&model, &netlist, &rtl, Some(strategy), &a.check, out_dir, &mut manifest);
    finish(&manifest, out_dir)?;
    result
}

/// Replays the recorded arguments with `--out-dir` replaced.
fn cmd_rerun(a: RerunArgs) -> Result<(), CliError> {
    let old = RunManifest::load(&a.manifest)?;
    let mut args = Vec::with_capacity(old.args.len() + 2);
    let mut it = old.args.iter();
    while let Some(arg) = it.next() {
        if arg == "--out-dir" {
            it.next();
        } else if !arg.starts_with("--out-dir=") {
            args.push(arg.clone());
        }
    }
    args.push("--out-dir".into());
    args.push(a.out_dir.display().to_string());
    let cli = <crate::Cli as clap::Parser>::try_parse_from(std::iter::once("lutnet".to_string()).chain(args.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("recorded arguments no longer parse: {}", e.kind())))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(CliError::Usage("cannot rerun a rerun".into()));
    }
    run(cli.command, &args)?;
    let new = RunManifest::load(&RunManifest::path(&a.out_dir, &old.command))?;
    let mut differ = Vec::new();
    for art in &old.artifacts {
        match new.artifacts.iter().find(|n| n.path == art.path) {
            Some(n) if n.sha256 == art.sha256 => {}
            Some(_) => differ.push(format!("{} changed", art.path)),
            None => differ.push(format!("{} missing", art.path)),
        }
    }
    differ.extend(
        new.artifacts
            .iter()
            .filter(|n| !old.artifacts.iter().any(|o| o.path == n.path))
            .map(|n| format!("{} is new", n.path)),
    );
    if !differ.is_empty() {
        return Err(CliError::Mismatch(format!("rerun differs: {}", differ.join(", "))));
    }
    println!("reproduced {} artifacts with identical hashes", old.artifacts.len());
    Ok(())
}

fn report_text(name: &str, geometry: &[LayerGeometry], r: &ResourceReport, baseline: &ResourceReport) -> String {
    let mut s = String::new();
    let widths: Vec<String> = geometry.iter().map(|g| g.width.to_string()).collect();
    let _ = writeln!(
        s,
        "{name}: {} inputs, layers {}",
        geometry.first().map_or(0, |g| g.in_width),
        widths.join("-")
    );
    let _ = writeln!(
        s,
        "{:<6}{:>8}  {:>4}{:>4}{:>4}{:>4}  {:<22}{:>16}{:>16}{:>18}",
        "layer", "neurons", "in", "F", "A", "D", "per neuron", "entries", "A=1 entries", "single table"
    );
    for ((g, l), b) in geometry.iter().zip(&r.layers).zip(&baseline.layers) {
        let _ = writeln!(
            s,
            "{:<6}{:>8}  {:>4}{:>4}{:>4}{:>4}  {:<22}{:>16}{:>16}{:>18}",
            g.index,
            g.width,
            g.in_bits,
            g.fanin,
            g.adder,
            g.degree,
            l.per_neuron.to_string(),
            l.entries,
            b.entries,
            l.single_table_entries
        );
    }
    let _ = writeln!(
        s,
        "total entries: {} (A=1: {}, single table over A*F inputs: {})",
        r.total_entries, baseline.total_entries, r.total_single_table_entries
    );
    let _ = writeln!(s, "latency: combined {} cycles, per-layer {} cycles", r.latency_combined, r.latency_per_layer);
    s
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    let (name, geometry, netlist) = match &a.netlist {
        Some(p) => {
            let nl = load_netlist(p)?;
            (nl.name.clone(), nl.geometry(), Some(nl))
        }
        None => {
            let mut cfg = base_config(a.preset.as_deref(), a.config.as_deref())?;
            apply_overrides(&mut cfg, a.adder, a.degree, a.fanin, a.beta);
            let cfg = validate_config(&cfg)?;
            (cfg.name.clone(), cfg.geometry(), None)
        }
    };
    let report = resource_report(&geometry)?;
    let single: Vec<LayerGeometry> = geometry.iter().map(|g| LayerGeometry { adder: 1, ..*g }).collect();
    let baseline = resource_report(&single)?;
    if a.json {
        let doc = serde_json::json!({ "name": name, "report": report, "a1_report": baseline });
        println!("{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
    } else {
        print!("{}", report_text(&name, &geometry, &report, &baseline));
    }
    if let Some(period) = a.period_ns {
        if !(period > 0.0 && period.is_finite()) {
            return Err(CliError::Usage(format!("--period-ns must be positive, got {period}")));
        }
        for s in [PipelineStrategy::Combined, PipelineStrategy::PerLayer] {
            let ns = match &netlist {
                Some(nl) => latency_report(nl, s, period)?.latency_ns,
                None => report.latency(s) as f64 * period,
            };
            println!("{s}: {ns} ns at {period} ns per cycle");
        }
    }
    Ok(())
}
