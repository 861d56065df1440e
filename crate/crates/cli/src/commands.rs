use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vrfer::classifiers::{
    load_model, save_model, train_logreg, train_mlp, LogRegConfig, MlpConfig, SavedModel, TrainConfig, TrainHistory,
    UnimodalModel,
};
use vrfer::dataset::{
    generate_synthetic, load_fea_dataset, load_image_observations, pair_multimodal, split_summary, write_fea_jsonl,
    write_image_observations, DatasetBundle, EmotionLabel, MultimodalBundle, Split, SynthConfig,
};
use vrfer::evaluation::{evaluate as eval_report, percent, render_comparison, render_report, ComparisonReport, ReportFormat};
use vrfer::fusion::{train_intermediate_fusion, train_late_fusion, IntermediateConfig, LateStrategy};
use vrfer::hypersearch::{run_grid_search, GridModel, GridSpec, SearchData, SearchOptions};
use vrfer::io::{read_to_string, to_json_pretty, to_jsonl, write_atomic};
use vrfer::nn::argmax_rows;

use crate::preds::{align, parse_preds, score, Scored};
use crate::{
    CompareArgs, EvaluateArgs, ExtractArgs, FormatArg, FuseArgs, FuseStrategy, GridArgs, ReportArgs, SplitArg,
    SynthArgs, TrainArgs, UnimodalKind,
};

/// Training config file. Every section is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    train: Option<TrainConfig>,
    mlp: MlpConfig,
    logreg: LogRegConfig,
    intermediate: IntermediateConfig,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).with_context(|| format!("{}", path.display()))
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), read_json)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    Ok(write_atomic(path, contents.as_bytes())?)
}

fn history_path(out: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}.history.json"))
    })
}

fn format(f: FormatArg) -> ReportFormat {
    match f {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Markdown => ReportFormat::Markdown,
    }
}

fn split(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    }
}

fn load_multimodal(bundle: &DatasetBundle, image_obs: &Path) -> Result<MultimodalBundle> {
    let obs = load_image_observations(image_obs)?;
    Ok(pair_multimodal(bundle, &obs, false)?)
}

/// Accuracy line on stdout plus the optional report and predictions files.
fn emit(label: &str, scored: &Scored, report: &ReportArgs) -> Result<()> {
    let r = eval_report(&scored.predictions(), &scored.labels)?;
    println!("{label} test accuracy: {}%", percent(r.accuracy));
    if let Some(path) = &report.report {
        write(path, &render_report(&r, format(report.format))?)?;
    }
    if let Some(path) = &report.preds {
        write(path, &to_jsonl(scored.rows())?)?;
    }
    Ok(())
}

fn save_history(path: &Path, history: &TrainHistory) -> Result<()> {
    write(path, &to_json_pretty(history)?)
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let config: SynthConfig = read_json(&args.config)?;
    let (bundle, observations) = generate_synthetic(&config, config.seed)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("{}", args.out_dir.display()))?;
    write(&args.out_dir.join("fea.jsonl"), &write_fea_jsonl(&bundle)?)?;
    write(&args.out_dir.join("image_obs.jsonl"), &write_image_observations(&observations)?)?;
    print!("{}", split_summary(&bundle).to_text());
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let bundle = load_fea_dataset(&args.data)?;
    let cfg = run_config(args.config.as_deref())?;
    let train_cfg = cfg.train.unwrap_or_default();
    let (model, history): (SavedModel, _) = match args.model {
        UnimodalKind::Mlp => {
            let (m, h) = train_mlp(&bundle, &cfg.mlp, &train_cfg)?;
            (m.into(), h)
        }
        UnimodalKind::Logreg => {
            let (m, h) = train_logreg(&bundle, &cfg.logreg, &train_cfg)?;
            (m.into(), h)
        }
    };
    save_model(&model, &args.out)?;
    save_history(&history_path(&args.out, args.history), &history)?;
    if let Some(e) = history.selected_epoch {
        eprintln!("selected epoch {e} of {}", history.epochs());
    }
    emit(model.kind().as_str(), &score(&model, &bundle, None, Split::Test)?, &args.report)
}

pub fn extract_features(args: ExtractArgs) -> Result<()> {
    #[derive(Serialize)]
    struct FeatureRow<'a> {
        id: &'a str,
        split: Split,
        label: EmotionLabel,
        features: &'a [f64],
    }

    let model = load_model(&args.model)?;
    let Some(mlp) = (match &model {
        SavedModel::Unimodal(m) => m.as_mlp(),
        _ => None,
    }) else {
        bail!("feature extraction needs an mlp model, got {}", model.kind());
    };
    let bundle = load_fea_dataset(&args.data)?;
    let samples: Vec<_> = bundle.samples().iter().collect();
    let (x, _) = vrfer::dataset::fea_arrays(&samples);
    let feats = mlp.extract_features(&x)?;
    let rows = samples.iter().enumerate().map(|(i, s)| FeatureRow {
        id: &s.id,
        split: s.split,
        label: s.label,
        features: feats.row(i),
    });
    write(&args.out, &to_jsonl(rows)?)
}

pub fn fuse(args: FuseArgs) -> Result<()> {
    let bundle = load_fea_dataset(&args.data)?;
    let mm = load_multimodal(&bundle, &args.image_obs)?;
    let cfg = run_config(args.config.as_deref())?;
    let fea_model = match load_model(&args.fea_model)? {
        SavedModel::Unimodal(m) => m,
        other => bail!("--fea-model must be a unimodal model, got {}", other.kind()),
    };

    let (model, history) = match args.strategy {
        FuseStrategy::Intermediate => {
            let Some(mlp) = fea_model.as_mlp() else {
                bail!("intermediate fusion needs an mlp FEA model, got {}", fea_model.kind());
            };
            let train_cfg = cfg.train.unwrap_or_else(TrainConfig::intermediate_fusion);
            let (head, h) = train_intermediate_fusion(mlp, &mm, &cfg.intermediate, &train_cfg)?;
            let model = SavedModel::IntermediateFusion {
                head,
                fea_model: mlp.clone(),
            };
            (model, h)
        }
        late => {
            let strategy = late_strategy(late);
            let train_cfg = cfg.train.unwrap_or_else(TrainConfig::late_fusion);
            let (head, h) = train_late_fusion(strategy, &fea_model, &mm, &train_cfg)?;
            (SavedModel::LateFusion { head, fea_model: fea_model.clone() }, h)
        }
    };
    save_model(&model, &args.out)?;
    if args.strategy != FuseStrategy::Average {
        save_history(&history_path(&args.out, args.history), &history)?;
    }

    let fea_only = score(&SavedModel::Unimodal(fea_model), &bundle, Some(&mm), Split::Test)?;
    let fea_acc = eval_report(&fea_only.predictions(), &fea_only.labels)?.accuracy;
    println!("fea test accuracy: {}%", percent(fea_acc));
    if let Some(p) = mm.image_probs(Split::Test) {
        let img_acc = eval_report(&argmax_rows(&p), &fea_only.labels)?.accuracy;
        println!("image test accuracy: {}%", percent(img_acc));
    }
    emit(&model.kind(), &score(&model, &bundle, Some(&mm), Split::Test)?, &args.report)
}

fn late_strategy(s: FuseStrategy) -> LateStrategy {
    match s {
        FuseStrategy::Average => LateStrategy::Average,
        FuseStrategy::WeightedSum => LateStrategy::WeightedSum,
        FuseStrategy::ConcatDense => LateStrategy::ConcatDense,
        FuseStrategy::Bilinear => LateStrategy::Bilinear,
        FuseStrategy::CrossAttention => LateStrategy::CrossAttention,
        FuseStrategy::Intermediate => unreachable!("handled by the caller"),
    }
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let bundle = load_fea_dataset(&args.data)?;
    let mm = args.image_obs.as_deref().map(|p| load_multimodal(&bundle, p)).transpose()?;
    let split = split(args.split);
    let scored = score(&model, &bundle, mm.as_ref(), split)?;
    if scored.labels.is_empty() {
        bail!("the {split} split is empty");
    }
    let report = eval_report(&scored.predictions(), &scored.labels)?;
    write(&args.report, &render_report(&report, format(args.format))?)?;
    if let Some(path) = &args.preds {
        write(path, &to_jsonl(scored.rows())?)?;
    }
    println!("{} {split} accuracy: {}%", model.kind(), percent(report.accuracy));
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let a = parse_preds(&read_to_string(&args.preds_a)?, &args.preds_a.display().to_string())?;
    let b = parse_preds(&read_to_string(&args.preds_b)?, &args.preds_b.display().to_string())?;
    let labels = load_fea_dataset(&args.labels)?;
    let (pa, pb, truth) = align(&a, &b, &labels)?;
    let report = ComparisonReport::new(&pa, &pb, &truth)?;
    write(&args.report, &render_comparison(&report, format(args.format))?)?;
    let t = &report.agreement;
    println!(
        "both correct {}, only a {}, only b {}, both wrong {}, total {}",
        t.both_correct, t.only_a_correct, t.only_b_correct, t.both_wrong, t.total
    );
    println!("oracle accuracy: {}%", percent(report.oracle_accuracy));
    Ok(())
}

pub fn gridsearch(args: GridArgs) -> Result<()> {
    let spec: GridSpec = read_json(&args.spec)?;
    let bundle = load_fea_dataset(&args.data)?;
    let options = SearchOptions {
        parallelism: args.parallelism,
        evaluate_all: args.evaluate_all,
        record_wall_time: args.wall_time,
    };

    let fusion_inputs = || -> Result<(MultimodalBundle, UnimodalModel)> {
        let (Some(obs), Some(fea)) = (&args.image_obs, &args.fea_model) else {
            bail!("{} grids need --image-obs and --fea-model", spec.model);
        };
        let mm = load_multimodal(&bundle, obs)?;
        match load_model(fea)? {
            SavedModel::Unimodal(m) => Ok((mm, m)),
            other => bail!("--fea-model must be a unimodal model, got {}", other.kind()),
        }
    };
    let outcome = match spec.model {
        GridModel::Mlp | GridModel::Logreg => run_grid_search(&spec, SearchData::Fea(&bundle), &options)?,
        GridModel::LateFusion => {
            let (mm, fea_model) = fusion_inputs()?;
            run_grid_search(
                &spec,
                SearchData::LateFusion {
                    fea_model: &fea_model,
                    bundle: &mm,
                },
                &options,
            )?
        }
        GridModel::IntermediateFusion => {
            let (mm, fea_model) = fusion_inputs()?;
            let Some(mlp) = fea_model.as_mlp() else {
                bail!("intermediate fusion grids need an mlp FEA model");
            };
            run_grid_search(&spec, SearchData::IntermediateFusion { mlp, bundle: &mm }, &options)?
        }
    };

    write(&args.out, &outcome.to_jsonl()?)?;
    if let Some(path) = &args.model_out {
        save_model(&outcome.winner_model, path)?;
    }
    let failed = outcome.results.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} candidates failed", outcome.results.len());
    }
    let w = outcome.winner();
    println!(
        "winner: candidate {} {} val {}% test {}%",
        w.index,
        serde_json::to_string(&w.params)?,
        percent(w.val_accuracy.unwrap_or(0.0)),
        percent(w.test_accuracy.unwrap_or(0.0)),
    );
    Ok(())
}
