use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use pagefold::aggregate::{aggregate_all, Strategy};
use pagefold::bestcase::{self, correctness, CorrectnessVector};
use pagefold::error::Error;
use pagefold::grid::{self, GridConfig, Scaling};
use pagefold::io::{self, ReadMode};
use pagefold::metrics::{self, Labels, MetricsReport};
use pagefold::model::{self, argmax, DocPrediction, LabelSpace, LabelSpaceKind, PageLabel};
use pagefold::perturb::{self, PerturbOp, PerturbSpec};
use pagefold::tasks::{self, DocumentLabel, MappingRule};

#[derive(Parser)]
#[command(name = "pagefold", version, about = "Multi-page document classification from page predictions")]
struct Cli {
    /// Reject unknown fields in input files instead of ignoring them.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads (0 = one per core). Never changes outputs.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Suppress the console summary.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check page predictions against a manifest.
    Validate(ValidateArgs),
    /// Turn page predictions into document predictions.
    Aggregate(AggregateArgs),
    /// Accuracy, F1, ECE and AURC of document predictions.
    Evaluate(EvaluateArgs),
    /// Best-case accuracy of OR-combined strategies.
    Bestcase(BestcaseArgs),
    /// Split page streams at predicted boundaries and classify each segment.
    Segment(SegmentArgs),
    /// Per-bundle accuracy and exact match.
    BundleEval(BundleEvalArgs),
    /// Count predicted page types per image.
    CountTypes(CountTypesArgs),
    /// Apply a seeded page-level distribution shift to a manifest.
    Perturb(PerturbArgs),
    /// Tile each document's pages into one image.
    Grid(GridArgs),
    /// Collapse page labels into document labels through a label map.
    MapLabels(MapLabelsArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    space: PathBuf,
    /// Write the validation report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    space: PathBuf,
    /// One or more of first, second, last, index(N), max_conf, soft_vote,
    /// hard_vote, external_document.
    #[arg(long, required = true, value_delimiter = ',', value_parser = parse_strategy)]
    strategy: Vec<Strategy>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    doc_preds: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Document label space; defaults to anonymous ids.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Only evaluate this strategy.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rc_curve: Option<PathBuf>,
    #[arg(long)]
    reliability: Option<PathBuf>,
}

#[derive(Args)]
struct BestcaseArgs {
    #[arg(long, num_args = 1.., required = true)]
    doc_preds: Vec<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "first")]
    baseline: String,
    #[arg(long)]
    combos: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    /// Predictions over [no_boundary, boundary], keyed by stream id and
    /// stream position.
    #[arg(long)]
    boundary_preds: PathBuf,
    /// Document-class predictions keyed the same way.
    #[arg(long)]
    class_preds: PathBuf,
    #[arg(long)]
    space: PathBuf,
    #[arg(long, default_value = "soft_vote", value_parser = parse_strategy)]
    strategy: Strategy,
    /// Manifest with stream_id/stream_position for scoring against truth.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BundleEvalArgs {
    #[arg(long)]
    doc_preds: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CountTypesArgs {
    /// Region predictions: doc_id is the image, page_index the region.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    space: PathBuf,
    /// Images listed here but without regions get a zero row.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_op)]
    op: PerturbOp,
    #[arg(long)]
    rate: f64,
    #[arg(long)]
    seed: u64,
    /// Manifest whose pages are injected (inject_pages only).
    #[arg(long)]
    donors: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Page paths are resolved relative to the manifest's directory.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "224x224", value_parser = parse_size)]
    size: (u32, u32),
    #[arg(long, default_value = "stretch", value_parser = parse_scaling)]
    mode: Scaling,
    /// Background gray level.
    #[arg(long, default_value_t = 255)]
    background: u8,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MapLabelsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    map: PathBuf,
    #[arg(long, default_value = "unanimous", value_parser = parse_rule)]
    rule: MappingRule,
    /// Use argmax of these page predictions instead of manifest page_labels.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_op(s: &str) -> Result<PerturbOp, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scaling(s: &str) -> Result<Scaling, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    grid::parse_size(s).map_err(|e| e.to_string())
}

fn parse_rule(s: &str) -> Result<MappingRule, String> {
    match s {
        "unanimous" => Ok(MappingRule::Unanimous),
        "majority" => Ok(MappingRule::Majority),
        _ => Err(format!("unknown rule {s:?}, expected unanimous or majority")),
    }
}

enum Failure {
    /// Bad invocation or missing input (exit 2).
    Usage(String),
    /// Inputs failed validation or processing (exit 1).
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownStrategy(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Failed(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

struct Ctx {
    mode: ReadMode,
    quiet: bool,
}

impl Ctx {
    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            print!("{}", text.as_ref());
        }
    }
}

fn input(path: &Path) -> Result<&Path, Failure> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Failure::Usage(format!("input file not found: {}", path.display())))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .expect("thread pool initialized once");
    }
    let ctx = Ctx {
        mode: if cli.strict { ReadMode::Strict } else { ReadMode::Lenient },
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Validate(a) => validate(&ctx, a),
        Command::Aggregate(a) => aggregate(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Bestcase(a) => bestcase_cmd(&ctx, a),
        Command::Segment(a) => segment(&ctx, a),
        Command::BundleEval(a) => bundle_eval(&ctx, a),
        Command::CountTypes(a) => count_types(&ctx, a),
        Command::Perturb(a) => perturb_cmd(&ctx, a),
        Command::Grid(a) => grid_cmd(&ctx, a),
        Command::MapLabels(a) => map_labels(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn write_json(value: &impl serde::Serialize, path: &Path) -> CliResult {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Failure::Failed(format!("{}: {e}", path.display())))
}

fn validate(ctx: &Ctx, a: &ValidateArgs) -> CliResult {
    let space = io::read_label_space(input(&a.space)?)?;
    let manifest = io::read_manifest(input(&a.manifest)?, ctx.mode)?;
    let preds = io::read_predictions(input(&a.predictions)?, &space, ctx.mode)?;
    let report = model::validate(&preds, &manifest, &space)?;
    if let Some(out) = &a.out {
        write_json(&report, out)?;
    }
    ctx.say(report.to_string());
    if report.ok {
        Ok(())
    } else {
        Err(Failure::Failed("validation failed".into()))
    }
}

fn aggregate(ctx: &Ctx, a: &AggregateArgs) -> CliResult {
    let space = io::read_label_space(input(&a.space)?)?;
    let manifest = io::read_manifest(input(&a.manifest)?, ctx.mode)?;
    let mut preds = io::read_predictions(input(&a.predictions)?, &space, ctx.mode)?;
    let report = model::validate(&preds, &manifest, &space)?;
    if !report.ok {
        eprint!("{report}");
        return Err(Failure::Failed("validation failed".into()));
    }
    preds.renormalize();
    let out = aggregate_all(&preds, &manifest, &a.strategy)?;
    let all: Vec<DocPrediction> = out.values().flatten().cloned().collect();
    io::write_doc_predictions(&all, &a.out)?;
    let mut summary = String::new();
    for (strategy, list) in &out {
        let fallbacks = list.iter().filter(|p| p.fallback_used).count();
        let _ = writeln!(
            summary,
            "{strategy}: {} documents ({fallbacks} clamped to last page)",
            list.len()
        );
    }
    ctx.say(summary);
    Ok(())
}

/// Groups document predictions by strategy.
fn by_strategy(preds: Vec<DocPrediction>) -> BTreeMap<Strategy, Vec<DocPrediction>> {
    let mut map: BTreeMap<Strategy, Vec<DocPrediction>> = BTreeMap::new();
    for p in preds {
        map.entry(p.strategy).or_default().push(p);
    }
    map
}

fn document_space(path: Option<&Path>, preds: &[DocPrediction], labels: &Labels) -> Result<LabelSpace, Failure> {
    if let Some(path) = path {
        return Ok(io::read_label_space(input(path)?)?);
    }
    let size = preds
        .iter()
        .map(|p| p.scores.len().max(p.label + 1))
        .chain(labels.values().map(|l| l + 1))
        .max()
        .unwrap_or(1);
    Ok(LabelSpace::anonymous(LabelSpaceKind::DocumentLevel, size)?)
}

fn report_table(reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:>8} {:>8} {:>8} {:>9} {:>9}",
        "Strategy", "Acc", "F1", "F1_M", "ECE", "AURC"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<20} {:>8.3} {:>8.3} {:>8.3} {:>9.6} {:>9.6}",
            r.strategy,
            100.0 * r.accuracy,
            100.0 * r.f1_weighted,
            100.0 * r.f1_macro,
            r.ece,
            r.aurc
        );
    }
    s
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> CliResult {
    let manifest = io::read_manifest(input(&a.manifest)?, ctx.mode)?;
    let preds = io::read_doc_predictions(input(&a.doc_preds)?, ctx.mode)?;
    let labels = manifest.labels();
    let space = document_space(a.space.as_deref(), &preds, &labels)?;
    let mut groups = by_strategy(preds);
    if let Some(s) = a.strategy {
        groups.retain(|k, _| *k == s);
    }
    if groups.is_empty() {
        return Err(Failure::Failed("no document predictions to evaluate".into()));
    }
    let wants_file = a.out.is_some() || a.rc_curve.is_some() || a.reliability.is_some();
    if wants_file && groups.len() > 1 {
        return Err(Failure::Usage(format!(
            "{} strategies in {}; select one with --strategy to write report files",
            groups.len(),
            a.doc_preds.display()
        )));
    }
    let reports = groups
        .values()
        .map(|preds| metrics::evaluate(preds, &labels, &space, a.bins))
        .collect::<Result<Vec<_>, _>>()?;
    if let [report] = reports.as_slice() {
        if let Some(out) = &a.out {
            io::write_report(report, out)?;
        }
        if let Some(path) = &a.rc_curve {
            io::write_rc_curve(report, path)?;
        }
        if let Some(path) = &a.reliability {
            io::write_reliability(report, path)?;
        }
    }
    ctx.say(report_table(&reports));
    Ok(())
}

fn bestcase_cmd(ctx: &Ctx, a: &BestcaseArgs) -> CliResult {
    let manifest = io::read_manifest(input(&a.manifest)?, ctx.mode)?;
    let labels = manifest.labels();
    let mut vectors: BTreeMap<String, CorrectnessVector> = BTreeMap::new();
    let mut sources: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in &a.doc_preds {
        let preds = io::read_doc_predictions(input(path)?, ctx.mode)?;
        for (strategy, list) in by_strategy(preds) {
            let name = strategy.to_string();
            if let Some(prev) = sources.insert(name.clone(), path.clone()) {
                return Err(Failure::Usage(format!(
                    "strategy {name} appears in both {} and {}",
                    prev.display(),
                    path.display()
                )));
            }
            vectors.insert(name, correctness(&list, &labels)?);
        }
    }
    let combos = match &a.combos {
        Some(spec) => bestcase::parse_combos(spec)?,
        None => bestcase::parse_combos(&bestcase::DEFAULT_COMBOS.join(","))?,
    };
    let loaded = || sources.keys().cloned().collect::<Vec<_>>().join(", ");
    for name in combos.iter().flatten().chain(std::iter::once(&a.baseline)) {
        if !vectors.contains_key(name) {
            return Err(Failure::Usage(format!(
                "no --doc-preds file provides strategy {name:?} (loaded: {})",
                loaded()
            )));
        }
    }
    let rows = bestcase::bestcase_table(&vectors, &combos, &a.baseline)?;
    if let Some(out) = &a.out {
        io::write_bestcase(&rows, out)?;
    }
    let mut s = String::new();
    let _ = writeln!(s, "{:<28} {:>8} {:>8}", "combo", "Acc", format!("Δ {}", a.baseline));
    for r in &rows {
        let _ = writeln!(s, "{:<28} {:>8.3} {:>+8.3}", r.combo, 100.0 * r.accuracy, 100.0 * r.delta);
    }
    ctx.say(s);
    Ok(())
}

fn segment(ctx: &Ctx, a: &SegmentArgs) -> CliResult {
    let space = io::read_label_space(input(&a.space)?)?;
    let boundary = io::read_predictions(input(&a.boundary_preds)?, &LabelSpace::binary_boundary(), ctx.mode)?;
    let classes = io::read_predictions(input(&a.class_preds)?, &space, ctx.mode)?;
    let b_by = boundary.pages_by_doc();
    let k_by = classes.pages_by_doc();
    let ids: BTreeSet<&str> = b_by.keys().chain(k_by.keys()).copied().collect();
    let empty = Vec::new();
    let segments: Vec<tasks::Segment> = ids
        .par_iter()
        .map(|id| {
            let b = b_by.get(id).unwrap_or(&empty);
            let k = k_by.get(id).unwrap_or(&empty);
            tasks::two_stage_classify(id, b, k, a.strategy)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut bytes = Vec::new();
    for s in &segments {
        serde_json::to_writer(&mut bytes, s).map_err(Error::from)?;
        bytes.push(b'\n');
    }
    fs::write(&a.out, bytes).map_err(|e| Failure::Failed(format!("{}: {e}", a.out.display())))?;

    let mut summary = format!("{} streams, {} segments\n", ids.len(), segments.len());
    if let Some(path) = &a.manifest {
        let manifest = io::read_manifest(input(path)?, ctx.mode)?;
        let (mut f1_sum, mut streams, mut hits, mut truths) = (0.0, 0usize, 0usize, 0usize);
        for stream in manifest.streams() {
            let truth = tasks::truth_segments(&stream, &manifest)?;
            let predicted: Vec<_> = segments
                .iter()
                .filter(|s| s.stream_id == stream.stream_id)
                .cloned()
                .collect();
            f1_sum += tasks::boundary_f1(&predicted, &truth);
            streams += 1;
            truths += truth.len();
            hits += truth.iter().filter(|t| predicted.contains(t)).count();
        }
        if streams > 0 {
            let _ = writeln!(
                summary,
                "boundary F1 {:.4} (mean over {streams} streams), exact segments {hits}/{truths}",
                f1_sum / streams as f64
            );
        }
    }
    ctx.say(summary);
    Ok(())
}

fn bundle_eval(ctx: &Ctx, a: &BundleEvalArgs) -> CliResult {
    let manifest = io::read_manifest(input(&a.manifest)?, ctx.mode)?;
    let preds = io::read_doc_predictions(input(&a.doc_preds)?, ctx.mode)?;
    let mut groups = by_strategy(preds);
    let strategy = match a.strategy {
        Some(s) => s,
        None if groups.len() == 1 => *groups.keys().next().unwrap(),
        None => {
            return Err(Failure::Usage(
                "several strategies in --doc-preds; select one with --strategy".into(),
            ))
        }
    };
    let list = groups
        .remove(&strategy)
        .ok_or_else(|| Failure::Usage(format!("no predictions for strategy {strategy}")))?;
    let by_doc: BTreeMap<String, DocPrediction> =
        list.into_iter().map(|p| (p.doc_id.clone(), p)).collect();
    let labels = manifest.labels();
    let bundles = manifest.bundles();
    let outcomes = bundles
        .iter()
        .map(|b| tasks::evaluate_bundle(&by_doc, b, &labels))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(out) = &a.out {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(out)
            .map_err(Error::from)?;
        w.write_record(["bundle_id", "documents", "accuracy", "exact_match"])
            .map_err(Error::from)?;
        for (b, o) in bundles.iter().zip(&outcomes) {
            w.write_record([
                o.bundle_id.clone(),
                b.document_count().to_string(),
                o.accuracy.to_string(),
                o.exact_match.to_string(),
            ])
            .map_err(Error::from)?;
        }
        w.flush().map_err(|e| Failure::Failed(e.to_string()))?;
    }
    let n = outcomes.len().max(1) as f64;
    let exact = outcomes.iter().filter(|o| o.exact_match).count();
    let mean_acc = outcomes.iter().map(|o| o.accuracy).sum::<f64>() / n;
    ctx.say(format!(
        "{strategy}: {} bundles, exact match {exact}/{} ({:.3}%), mean per-document accuracy {:.3}%\n",
        outcomes.len(),
        outcomes.len(),
        100.0 * exact as f64 / n,
        100.0 * mean_acc
    ));
    Ok(())
}

fn count_types(ctx: &Ctx, a: &CountTypesArgs) -> CliResult {
    let space = io::read_label_space(input(&a.space)?)?;
    let preds = io::read_predictions(input(&a.predictions)?, &space, ctx.mode)?;
    let by_doc = preds.pages_by_doc();
    let mut ids: BTreeSet<String> = by_doc.keys().map(|s| s.to_string()).collect();
    if let Some(path) = &a.manifest {
        let manifest = io::read_manifest(input(path)?, ctx.mode)?;
        ids.extend(manifest.documents().iter().map(|d| d.doc_id.clone()));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&a.out)
        .map_err(Error::from)?;
    let mut header = vec!["doc_id".to_string()];
    header.extend(space.classes().iter().cloned());
    w.write_record(&header).map_err(Error::from)?;
    let mut total = vec![0usize; space.size()];
    for id in &ids {
        let regions = by_doc.get(id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let counts = tasks::count_page_types(regions, space.size())?;
        total.iter_mut().zip(&counts).for_each(|(t, c)| *t += c);
        let mut row = vec![id.clone()];
        row.extend(counts.iter().map(usize::to_string));
        w.write_record(&row).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Failure::Failed(e.to_string()))?;
    let mut s = format!("{} images\n", ids.len());
    for (name, n) in space.classes().iter().zip(total) {
        let _ = writeln!(s, "  {name}: {n}");
    }
    ctx.say(s);
    Ok(())
}

fn perturb_cmd(ctx: &Ctx, a: &PerturbArgs) -> CliResult {
    let manifest = io::read_manifest(input(&a.manifest)?, ctx.mode)?;
    let mut spec = PerturbSpec::new(a.op, a.rate, a.seed);
    if let Some(path) = &a.donors {
        spec = spec.with_donors(io::read_manifest(input(path)?, ctx.mode)?);
    }
    let (out, log) = perturb::apply(&manifest, &spec)?;
    io::write_manifest(&out, &a.out)?;
    if let Some(path) = &a.log {
        io::write_provenance(&log, path)?;
    }
    let before: usize = manifest.documents().iter().map(|d| d.page_count()).sum();
    let after: usize = out.documents().iter().map(|d| d.page_count()).sum();
    ctx.say(format!(
        "{:?} rate {} seed {}: {} documents, {before} -> {after} pages, {} logged moves\n",
        a.op,
        a.rate,
        a.seed,
        out.len(),
        log.len()
    ));
    Ok(())
}

fn grid_cmd(ctx: &Ctx, a: &GridArgs) -> CliResult {
    let manifest = io::read_manifest(input(&a.manifest)?, ctx.mode)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::Failed(format!("{}: {e}", a.out_dir.display())))?;
    let config = GridConfig {
        height: a.size.0,
        width: a.size.1,
        background: image::Rgb([a.background; 3]),
        scaling: a.mode,
    };
    let written = manifest
        .documents()
        .par_iter()
        .map(|doc| {
            let paths: Vec<PathBuf> = doc.pages.iter().map(|p| base.join(p)).collect();
            let img = grid::compose_files(&paths, &config)
                .map_err(|e| Error::InDocument { doc_id: doc.doc_id.clone(), source: Box::new(e) })?;
            grid::write_grid(&img, &a.out_dir, &doc.doc_id)
        })
        .collect::<Result<Vec<_>, _>>()?;
    ctx.say(format!(
        "{} grids ({}x{}, {:?}) written to {}\n",
        written.len(),
        a.size.0,
        a.size.1,
        a.mode,
        a.out_dir.display()
    ));
    Ok(())
}

#[derive(serde::Serialize)]
struct MappedDocument<'a> {
    doc_id: &'a str,
    label: Option<usize>,
    label_name: Option<&'a str>,
    conflict: bool,
}

fn map_labels(ctx: &Ctx, a: &MapLabelsArgs) -> CliResult {
    let manifest = io::read_manifest(input(&a.manifest)?, ctx.mode)?;
    let map = io::read_label_map(input(&a.map)?)?;
    let predicted: Option<BTreeMap<String, Vec<usize>>> = match &a.predictions {
        Some(path) => {
            let set = io::read_predictions(input(path)?, map.source(), ctx.mode)?;
            Some(
                set.pages_by_doc()
                    .into_iter()
                    .map(|(id, pages)| (id.to_owned(), pages.iter().map(|p| argmax(&p.probs)).collect()))
                    .collect(),
            )
        }
        None => None,
    };
    let mut bytes = Vec::new();
    let (mut conflicts, mut agree, mut labeled) = (0, 0, 0);
    for doc in manifest.documents() {
        let page_labels: Vec<usize> = match &predicted {
            Some(p) => p.get(&doc.doc_id).cloned().unwrap_or_default(),
            None => doc
                .page_labels
                .iter()
                .flatten()
                .filter_map(|l: &PageLabel| l.class())
                .collect(),
        };
        let outcome = tasks::map_pages_to_document(&page_labels, &map, a.rule)
            .map_err(|e| Error::InDocument { doc_id: doc.doc_id.clone(), source: Box::new(e) })?;
        let label = match outcome {
            DocumentLabel::Label(k) => Some(k),
            DocumentLabel::Conflict => {
                conflicts += 1;
                None
            }
        };
        if let (Some(k), Some(y)) = (label, doc.label) {
            labeled += 1;
            agree += usize::from(k == y);
        }
        let rec = MappedDocument {
            doc_id: &doc.doc_id,
            label,
            label_name: label.and_then(|k| map.target().name(k)),
            conflict: label.is_none(),
        };
        serde_json::to_writer(&mut bytes, &rec).map_err(Error::from)?;
        bytes.push(b'\n');
    }
    fs::write(&a.out, bytes).map_err(|e| Failure::Failed(format!("{}: {e}", a.out.display())))?;
    ctx.say(format!(
        "{} documents, {conflicts} conflicts, {agree}/{labeled} agree with manifest labels\n",
        manifest.len()
    ));
    Ok(())
}
