use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

use broncholoc::detector::{detect_branch, Connectivity, DetectorParams};
use broncholoc::eval::{
    confusion_matrix, format_confusion, format_report_table, load_truth, mean_over_sequences, topk_accuracy,
    write_report_csv, ReportRow, SequenceResult,
};
use broncholoc::filter::{top_k, GatePolicy};
use broncholoc::frames::{list_frames, read_frame, write_gray, write_overlay, PosteriorWriter};
use broncholoc::imaging::{quantize_levels, KMeansInit, KMeansParams};
use broncholoc::likelihood::{load_likelihood_file, train_centroids, CentroidModel, DistributionTable};
use broncholoc::par::{self, Execution};
use broncholoc::pipeline::{LikelihoodSource, Localizer, PipelineConfig};
use broncholoc::synth::{generate_sequence, parse_walk, random_walks, write_sequence, SynthConfig};
use broncholoc::viterbi::viterbi_rankings;
use broncholoc::{TransitionModel, TreeModel};

use crate::{
    Cli, Command, Conn, DetectArgs, DetectorOpts, EvaluateArgs, Gate, LocalizeArgs, QuantizeArgs, SimulateArgs,
    TrainArgs, ViterbiArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let tree = match &cli.tree {
        Some(path) => TreeModel::load(path).context("loading tree")?,
        None => TreeModel::bundled(),
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Quantize(args) => quantize(args, exec),
        Command::Detect(args) => detect(args, exec),
        Command::Localize(args) => localize(&tree, args),
        Command::Evaluate(args) => evaluate(&tree, args),
        Command::Simulate(args) => simulate(&tree, args),
        Command::Viterbi(args) => viterbi(&tree, args),
        Command::TrainCentroids(args) => train(&tree, args, exec),
        Command::Tree => {
            print!("{}", tree.to_spec_string());
            Ok(())
        }
    }
}

impl DetectorOpts {
    fn params(&self) -> Result<DetectorParams> {
        let params = DetectorParams {
            intensity_percentile: self.percentile,
            area_fraction: self.area_frac,
            connectivity: match self.connectivity {
                Conn::Four => Connectivity::Four,
                Conn::Eight => Connectivity::Eight,
            },
            ..DetectorParams::default()
        };
        params.validate()?;
        Ok(params)
    }
}

impl From<Gate> for GatePolicy {
    fn from(g: Gate) -> Self {
        match g {
            Gate::Branch => GatePolicy::BranchGated,
            Gate::Always => GatePolicy::AlwaysUpdate,
            Gate::Never => GatePolicy::NeverUpdate,
        }
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn quantize(args: QuantizeArgs, exec: Execution) -> Result<()> {
    ensure!(args.k >= 1, "k must be at least 1");
    let paths = list_frames(&args.frames)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let params = KMeansParams {
        init: if args.quantile_init {
            KMeansInit::Quantile
        } else {
            KMeansInit::Optimal
        },
        ..KMeansParams::with_k(args.k)
    };
    let levels = par::try_map(exec, &paths, |path| -> broncholoc::Result<usize> {
        let q = quantize_levels(&read_frame(path)?, &params)?;
        write_gray(args.out.join(format!("{}.pgm", file_stem(path))), q.image())?;
        Ok(q.levels().len())
    })?;
    for (path, n) in paths.iter().zip(&levels) {
        println!("{}\t{n} levels", file_stem(path));
    }
    eprintln!("quantized {} frames into {}", paths.len(), args.out.display());
    Ok(())
}

fn detect(args: DetectArgs, exec: Execution) -> Result<()> {
    let params = args.detector.params()?;
    let paths = list_frames(&args.frames)?;
    if let Some(dir) = &args.overlay {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let rows = par::try_map(exec, &paths, |path| -> broncholoc::Result<_> {
        let gray = read_frame(path)?;
        let det = detect_branch(&gray, &params)?;
        if let Some(dir) = &args.overlay {
            let min_area = params.area_fraction * gray.area() as f64;
            write_overlay(dir.join(format!("{}.png", file_stem(path))), &gray, &det, min_area)?;
        }
        Ok((det.threshold, det.instances().len(), det.lumen_count, det.is_branch))
    })?;

    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut csv = csv::Writer::from_writer(sink);
    csv.write_record(["frame", "file", "threshold", "components", "lumens", "branch"])?;
    for (i, (path, (th, comps, lumens, branch))) in paths.iter().zip(&rows).enumerate() {
        csv.write_record([
            i.to_string(),
            file_stem(path),
            th.to_string(),
            comps.to_string(),
            lumens.to_string(),
            branch.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn format_top(tree: &TreeModel, probs: &[f64], k: usize) -> Result<String> {
    Ok(top_k(probs, k)?
        .iter()
        .map(|(i, p)| format!("{}:{p:.4}", tree.label(*i)))
        .collect::<Vec<_>>()
        .join(" "))
}

fn localize(tree: &TreeModel, args: LocalizeArgs) -> Result<()> {
    ensure!(
        (1..=tree.len()).contains(&args.topk),
        "--topk must be in 1..={}",
        tree.len()
    );
    let gate = GatePolicy::from(args.gate);
    let tm = TransitionModel::new(tree, args.alpha, args.m)?;
    let paths = list_frames(&args.frames)?;

    let table;
    let model;
    let source = match (&args.likelihoods, &args.centroids) {
        (Some(path), _) => {
            table = load_likelihood_file(path, tree).context("loading likelihoods")?;
            ensure!(
                table.len() >= paths.len(),
                "{} has {} rows but there are {} frames",
                path.display(),
                table.len(),
                paths.len()
            );
            LikelihoodSource::Table(&table)
        }
        (None, Some(path)) => {
            model = CentroidModel::load(path).context("loading centroid model")?;
            model.check_tree(tree)?;
            LikelihoodSource::Classifier(&model)
        }
        (None, None) if gate == GatePolicy::NeverUpdate => LikelihoodSource::Table(&[]),
        (None, None) => bail!("--likelihoods or --centroids is required unless --gate never"),
    };
    let config = PipelineConfig {
        detector: args.detector.params()?,
        kmeans: KMeansParams::with_k(args.k),
        gate,
        ..PipelineConfig::default()
    };
    let mut localizer = Localizer::new(tree, &tm, source, config)?;
    let mut posterior_out = match &args.out {
        Some(path) => Some(PosteriorWriter::new(create(path)?, tree)?),
        None => None,
    };

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "frame\tlumens\tbranch\tupdated\ttop{}", args.topk)?;
    for path in &paths {
        let gray = read_frame(path)?;
        let out = localizer.process(&gray)?;
        if let Some(w) = posterior_out.as_mut() {
            w.write_row(out.frame, &out.posterior)?;
        }
        writeln!(
            stdout,
            "{}\t{}\t{}\t{}\t{}",
            out.frame,
            out.lumen_count,
            out.is_branch,
            out.updated,
            format_top(tree, &out.posterior, args.topk)?
        )?;
        stdout.flush()?;
    }
    Ok(())
}

/// Short name for a result file: its directory, or the file stem when the
/// file sits in the working directory.
fn sequence_id(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_stem(path))
}

fn evaluate(tree: &TreeModel, args: EvaluateArgs) -> Result<()> {
    ensure!(
        args.posteriors.len() == args.truth.len(),
        "got {} distribution files but {} truth files",
        args.posteriors.len(),
        args.truth.len()
    );
    ensure!(!args.topk.is_empty(), "--topk needs at least one value");
    for &k in &args.topk {
        ensure!((1..=tree.len()).contains(&k), "k={k} outside 1..={}", tree.len());
    }
    let mut rows = Vec::new();
    for (dist_path, truth_path) in args.posteriors.iter().zip(&args.truth) {
        let table = DistributionTable::load(dist_path).context("loading distributions")?;
        let dists = table.rows_in_tree_order(tree)?;
        let truth = load_truth(truth_path, tree).context("loading truth")?;
        ensure!(
            dists.len() == truth.len(),
            "{} has {} frames but {} has {}",
            dist_path.display(),
            dists.len(),
            truth_path.display(),
            truth.len()
        );
        let result = SequenceResult::from_distributions(sequence_id(dist_path), &dists, truth)?;
        if args.confusion {
            println!("{}", result.id);
            print!("{}", format_confusion(&confusion_matrix(&result, tree.len())?, tree));
            println!();
        }
        rows.push(ReportRow::evaluate(
            &result,
            args.classifier.as_str(),
            args.bayesian,
            args.branch_detector,
            &args.topk,
        )?);
    }
    if rows.len() > 1 {
        let accuracies = args
            .topk
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let values: Vec<f64> = rows.iter().map(|r| r.accuracies[i].1).collect();
                Ok((k, mean_over_sequences(&values)?))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ReportRow {
            sequence: "mean".into(),
            accuracies,
            ..rows[0].clone()
        });
    }
    print!("{}", format_report_table(&rows));
    if let Some(path) = &args.out {
        write_report_csv(create(path)?, &rows)?;
    }
    Ok(())
}

fn simulate(tree: &TreeModel, args: SimulateArgs) -> Result<()> {
    let config = SynthConfig {
        frames_per_node: args.frames_per_node,
        frames_per_transition: args.frames_per_transition,
        noise: args.noise,
        size: args.size,
    };
    let jobs: Vec<(PathBuf, Vec<usize>, u64)> = match (&args.walk, args.random) {
        (Some(text), _) => vec![(args.out.clone(), parse_walk(tree, text)?, args.seed)],
        (None, Some(count)) => random_walks(tree, count, args.max_depth, args.seed)?
            .into_iter()
            .enumerate()
            .map(|(i, walk)| (args.out.join(format!("seq{i:03}")), walk, args.seed + 1 + i as u64))
            .collect(),
        (None, None) => bail!("give --walk or --random"),
    };
    for (dir, walk, seed) in jobs {
        let seq = generate_sequence(tree, &walk, &config, seed)?;
        write_sequence(&dir, tree, &seq)?;
        let labels: Vec<&str> = walk.iter().map(|&w| tree.label(w)).collect();
        println!("{}\t{} frames\t{}", dir.display(), seq.len(), labels.join(","));
    }
    Ok(())
}

fn viterbi(tree: &TreeModel, args: ViterbiArgs) -> Result<()> {
    ensure!(
        (1..=tree.len()).contains(&args.topk),
        "--topk must be in 1..={}",
        tree.len()
    );
    let tm = TransitionModel::new(tree, args.alpha, args.m)?;
    let likelihoods = load_likelihood_file(&args.likelihoods, tree).context("loading likelihoods")?;
    let (path, rankings) = viterbi_rankings(&likelihoods, &tm, tree.root_index(), !args.unconstrained)?;
    let labels: Vec<&str> = path.states.iter().map(|&s| tree.label(s)).collect();
    println!("path\t{}", labels.join(" "));
    println!("log_score\t{}", path.log_score);

    if let Some(out) = &args.out {
        let mut csv = csv::Writer::from_writer(create(out)?);
        let mut header = vec!["frame".to_owned(), "state".to_owned()];
        header.extend((1..=args.topk).map(|k| format!("rank{k}")));
        csv.write_record(&header)?;
        for (t, ranking) in rankings.iter().enumerate() {
            let mut record = vec![t.to_string(), tree.label(path.states[t]).to_owned()];
            record.extend(ranking.iter().take(args.topk).map(|&s| tree.label(s).to_owned()));
            csv.write_record(&record)?;
        }
        csv.flush()?;
    }
    if let Some(truth_path) = &args.truth {
        let truth = load_truth(truth_path, tree)?;
        let result = SequenceResult::new(sequence_id(&args.likelihoods), rankings, truth)?;
        for k in 1..=args.topk {
            println!("top{k}\t{:.4}", topk_accuracy(&result, k)?);
        }
    }
    Ok(())
}

fn train(tree: &TreeModel, args: TrainArgs, exec: Execution) -> Result<()> {
    ensure!(
        args.frames.len() == args.truth.len(),
        "got {} frame directories but {} truth files",
        args.frames.len(),
        args.truth.len()
    );
    let params = KMeansParams::with_k(args.k);
    let mut labeled = Vec::new();
    for (dir, truth_path) in args.frames.iter().zip(&args.truth) {
        let paths = list_frames(dir)?;
        let truth = load_truth(truth_path, tree)?;
        ensure!(
            paths.len() == truth.len(),
            "{} has {} frames but {} has {} labels",
            dir.display(),
            paths.len(),
            truth_path.display(),
            truth.len()
        );
        let quantized = par::try_map(exec, &paths, |p| quantize_levels(&read_frame(p)?, &params))?;
        labeled.extend(quantized.into_iter().zip(truth));
    }
    let model = train_centroids(&labeled, tree, (args.thumb, args.thumb), args.temperature, exec)?;
    model.save(&args.out)?;
    let present = (0..tree.len()).filter(|&c| !model.is_absent(c)).count();
    println!(
        "trained on {} frames, {present}/{} classes with data -> {}",
        labeled.len(),
        tree.len(),
        args.out.display()
    );
    Ok(())
}
