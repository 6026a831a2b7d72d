use std::path::{Path, PathBuf};

use serde::Serialize;
use stableaml::features::{extract_all_with_labels, write_features, FeatureConfig};
use stableaml::graph::{build_graph, density};
use stableaml::ingest::{
    parse_label_registry, parse_metadata, parse_transfers, parse_transfers_with, parse_wallet_labels, validate_log,
    write_labels, write_metadata, write_registry, write_transfers, ClassLabels, EventLog, LabelRegistry,
    MetadataTable, ParseOptions, ValidationReport,
};
use stableaml::synth::{corpus_stats, generate_corpus, serialize_corpus, SynthConfig};

use crate::args::{FeaturizeArgs, GraphStatsArgs, IngestArgs, SynthArgs};
use crate::error::{data, CliResult};
use crate::manifest::Run;

fn json_bytes(v: &impl Serialize) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| data(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Reads `dir/name` when it exists.
fn optional(run: &mut Run, dir: &Path, name: &str) -> CliResult<Option<Vec<u8>>> {
    let path = dir.join(name);
    if path.is_file() {
        run.read_input(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// Transfer log plus side tables from a corpus directory.
pub struct Corpus {
    pub log: EventLog,
    pub registry: LabelRegistry,
    pub metadata: MetadataTable,
    pub labels: Option<ClassLabels>,
}

pub fn load_corpus(run: &mut Run, dir: &Path) -> CliResult<Corpus> {
    let transfers = run.read_input(&dir.join("transfers.csv"))?;
    let log = parse_transfers(transfers.as_slice())?;
    let registry = match optional(run, dir, "registry.csv")? {
        Some(b) => parse_label_registry(b.as_slice())?,
        None => LabelRegistry::new(),
    };
    let metadata = match optional(run, dir, "metadata.csv")? {
        Some(b) => parse_metadata(b.as_slice())?,
        None => MetadataTable::new(),
    };
    let labels = match optional(run, dir, "labels.csv")? {
        Some(b) => Some(parse_wallet_labels(b.as_slice())?),
        None => None,
    };
    Ok(Corpus {
        log,
        registry,
        metadata,
        labels,
    })
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    validation: &'a ValidationReport,
    rejected_rows: usize,
    registry_addresses: Option<usize>,
    labeled_wallets: Option<usize>,
    metadata_rows: Option<usize>,
}

pub fn ingest(a: &IngestArgs) -> CliResult<()> {
    let mut run = Run::start("ingest", a, &a.out)?;
    let (dir, transfers): (Option<PathBuf>, PathBuf) = if a.input.is_dir() {
        (Some(a.input.clone()), a.input.join("transfers.csv"))
    } else {
        (None, a.input.clone())
    };
    let bytes = run.read_input(&transfers)?;
    let parsed = parse_transfers_with(
        bytes.as_slice(),
        ParseOptions {
            error_budget: a.error_budget,
        },
    )?;
    let mut buf = Vec::new();
    write_transfers(&parsed.log, &mut buf)?;
    run.write_output("transfers.csv", &buf)?;

    let (mut registry_n, mut labels_n, mut metadata_n) = (None, None, None);
    if let Some(dir) = dir {
        if let Some(b) = optional(&mut run, &dir, "registry.csv")? {
            let reg = parse_label_registry(b.as_slice())?;
            let mut buf = Vec::new();
            write_registry(&reg, &mut buf)?;
            run.write_output("registry.csv", &buf)?;
            registry_n = Some(reg.len());
        }
        if let Some(b) = optional(&mut run, &dir, "labels.csv")? {
            let labels = parse_wallet_labels(b.as_slice())?;
            let mut buf = Vec::new();
            write_labels(&labels, &mut buf)?;
            run.write_output("labels.csv", &buf)?;
            labels_n = Some(labels.len());
        }
        if let Some(b) = optional(&mut run, &dir, "metadata.csv")? {
            let table = parse_metadata(b.as_slice())?;
            let mut buf = Vec::new();
            write_metadata(&table, &mut buf)?;
            run.write_output("metadata.csv", &buf)?;
            metadata_n = Some(table.len());
        }
    }
    if !parsed.row_errors.is_empty() {
        let mut rejected = String::from("line,error\n");
        for e in &parsed.row_errors {
            rejected.push_str(&format!("{},\"{}\"\n", e.line, e.message.replace('"', "\"\"")));
        }
        run.write_output("rejected_rows.csv", rejected.as_bytes())?;
    }
    let report = validate_log(&parsed.log);
    let summary = IngestSummary {
        validation: &report,
        rejected_rows: parsed.row_errors.len(),
        registry_addresses: registry_n,
        labeled_wallets: labels_n,
        metadata_rows: metadata_n,
    };
    run.write_output("validation.json", &json_bytes(&summary)?)?;
    println!(
        "ingested {} events over {} wallets ({} duplicates collapsed, {} rows rejected)",
        report.events,
        report.wallets,
        parsed.log.duplicates_collapsed(),
        parsed.row_errors.len()
    );
    run.finish()?;
    Ok(())
}

pub fn featurize(a: &FeaturizeArgs) -> CliResult<()> {
    let mut run = Run::start("featurize", a, &a.out)?;
    let corpus = load_corpus(&mut run, &a.input)?;
    let mut cfg = FeatureConfig::default();
    if let Some(v) = a.same_value_min_group {
        cfg.same_value_min_group = v;
    }
    if let Some(v) = a.proxy_window_seconds {
        cfg.proxy_window_seconds = v;
    }
    if let Some(v) = a.proxy_amount_tolerance {
        cfg.proxy_amount_tolerance = v;
    }
    if let Some(v) = a.fanout_cap {
        cfg.hop.fanout_cap = v;
    }
    cfg.hop.validate()?;
    cfg.flagged_from_labels = a.flagged_from_labels;
    if cfg.flagged_from_labels && corpus.labels.is_none() {
        return Err(data("--flagged-from-labels needs labels.csv in the input directory"));
    }
    let g = build_graph(&corpus.log);
    let m = extract_all_with_labels(
        &corpus.log,
        &g,
        &corpus.registry,
        &corpus.metadata,
        corpus.labels.as_ref(),
        &cfg,
    );
    let mut buf = Vec::new();
    write_features(&m, &mut buf)?;
    run.write_output("features.csv", &buf)?;
    println!("featurized {} wallets", g.node_count());
    run.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct GraphStats {
    nodes: usize,
    edges: usize,
    density: Option<f64>,
    total_volume: String,
    self_loops: usize,
    max_degree: usize,
    mean_degree: f64,
    isolated_after_self_loops: usize,
    service_addresses: usize,
}

pub fn graph_stats(a: &GraphStatsArgs) -> CliResult<()> {
    let mut run = Run::start("graph-stats", a, &a.out)?;
    let corpus = load_corpus(&mut run, &a.input)?;
    let g = build_graph(&corpus.log);
    let degrees: Vec<usize> = (0..g.node_count()).map(|v| g.undirected_neighbors(v).len()).collect();
    let stats = GraphStats {
        nodes: g.node_count(),
        edges: g.edge_count(),
        density: density(&g).ok(),
        total_volume: stableaml::ingest::format_amount(g.total_volume()),
        self_loops: g.edges().iter().filter(|e| e.from == e.to).count(),
        max_degree: degrees.iter().copied().max().unwrap_or(0),
        mean_degree: if degrees.is_empty() {
            0.0
        } else {
            degrees.iter().sum::<usize>() as f64 / degrees.len() as f64
        },
        isolated_after_self_loops: degrees.iter().filter(|&&d| d == 0).count(),
        service_addresses: g.nodes().iter().filter(|a| corpus.registry.is_service(a)).count(),
    };
    run.write_output("graph_stats.json", &json_bytes(&stats)?)?;
    let mut buf = Vec::new();
    g.write_edges(&mut buf)?;
    run.write_output("edges.csv", &buf)?;
    println!(
        "{} nodes, {} edges, density {}",
        stats.nodes,
        stats.edges,
        stats.density.map_or("n/a".into(), |d| format!("{d:.3e}"))
    );
    run.finish()?;
    Ok(())
}

pub fn synth(a: &SynthArgs, seed: Option<u64>) -> CliResult<()> {
    let mut run = Run::start("synth", a, &a.out)?;
    let mut cfg = SynthConfig {
        n_wallets: a.wallets,
        ..SynthConfig::default()
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = &a.proportions {
        cfg.class_proportions = [p[0], p[1], p[2]];
    }
    if let Some(v) = a.noise_rate {
        cfg.noise_rate = v;
    }
    if let Some(v) = a.span_days {
        cfg.span_days = v;
    }
    if let Some(v) = a.mixer_count {
        cfg.mixer_count = v;
    }
    if let Some(v) = a.cex_count {
        cfg.cex_count = v;
    }
    if let Some(v) = a.normal_mixer_rate {
        cfg.normal_mixer_rate = v;
    }
    run.set_seed(cfg.seed);
    let corpus = generate_corpus(&cfg)?;
    for (name, bytes) in serialize_corpus(&corpus)? {
        run.write_output(name, &bytes)?;
    }
    let s = corpus_stats(&corpus);
    println!(
        "{} wallets ({} normal, {} cybercrime, {} blocklisted), {} services, {} events",
        s.labeled_wallets, s.class_counts[0], s.class_counts[1], s.class_counts[2], s.service_addresses, s.events
    );
    run.finish()?;
    Ok(())
}
