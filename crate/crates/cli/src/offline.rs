//! Batch commands. They run the pipeline in-process and need no server.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use floorspace_core::corpus::generator::render_tones;
use floorspace_core::corpus::replay::replay as replay_corpus;
use floorspace_core::corpus::{evaluate, evaluate_oracle, generate, replay_mixed, Corpus, EvalSettings, GeneratorConfig};
use floorspace_core::engine::{ConfigChange, EngineConfig};
use floorspace_core::learner::{
    make_training_instances, train as train_model, FeatureBinning, FloorModel, TrainingSummary, FEATURE_NAMES,
};
use floorspace_core::mixer::MixerConfig;
use floorspace_core::wav::{read_wav, write_wav};
use floorspace_core::FloorClass;

use crate::{EvalArgs, MixdownArgs};

const TONE_AMPLITUDE: f64 = 8000.0;

fn require_file(path: &Path, what: &str) -> Result<()> {
    ensure!(path.is_file(), "{what} {} does not exist", path.display());
    Ok(())
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load_from_path(path).with_context(|| format!("cannot load corpus {}", path.display()))
}

fn load_model(path: &Path) -> Result<FloorModel> {
    FloorModel::load_from_path(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn floors_text(floors: &[Vec<String>]) -> String {
    floors.iter().map(|f| format!("{{{}}}", f.join(","))).collect()
}

fn print_events(events: &[ConfigChange]) {
    for e in events {
        println!("{:>10} ms  {}  score {:.4}", e.tick, floors_text(&e.floors), e.score);
    }
}

/// `<dir>/<corpus stem>.<name>.wav`
pub fn audio_path(corpus: &Path, dir: Option<&Path>, name: &str) -> PathBuf {
    let stem = corpus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| corpus.parent().map(Path::to_path_buf).unwrap_or_default());
    dir.join(format!("{stem}.{name}.wav"))
}

pub fn train(corpora: &[PathBuf], out: &Path, sample_period: i64) -> Result<()> {
    for p in corpora {
        require_file(p, "corpus")?;
    }
    let mut instances = Vec::new();
    for p in corpora {
        let c = load_corpus(p)?;
        ensure!(c.is_labeled(), "corpus {} has unlabeled turns; training needs floor labels", p.display());
        let mut inst = make_training_instances(&c.utterances(), c.end(), sample_period)
            .with_context(|| format!("cannot sample {}", p.display()))?;
        instances.append(&mut inst);
    }
    let model = train_model(&instances).context("training failed")?;
    model.save_to_path(out).with_context(|| format!("cannot write model {}", out.display()))?;

    let summary = TrainingSummary::from_instances(&FeatureBinning::default(), &instances);
    let [same, diff] = summary.class_counts;
    println!("instances: {} ({} SAME, {} DIFF)", same + diff, same, diff);
    println!(
        "priors: P({}) = {:.4}  P({}) = {:.4}",
        FloorClass::Same,
        model.priors[0],
        FloorClass::Diff,
        model.priors[1]
    );
    println!("occupied bins (SAME / DIFF of total):");
    for (f, [s, d]) in summary.occupied_bins().into_iter().enumerate() {
        let total = summary.occupancy[f][0].len();
        println!("  {:<11} {s:>3} / {d:>3} of {total}", FEATURE_NAMES[f]);
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    require_file(&a.corpus, "corpus")?;
    if let Some(m) = &a.model {
        require_file(m, "model")?;
    }
    let corpus = load_corpus(&a.corpus)?;
    let settings = EvalSettings::default();
    let report = match &a.model {
        Some(m) if !a.oracle => evaluate(load_model(m)?, &corpus, &settings),
        _ => evaluate_oracle(&corpus, &settings),
    }
    .with_context(|| format!("cannot evaluate {}", a.corpus.display()))?;
    println!("{}", report.summary_line());
    let writes = [
        (&a.report, report.to_text()),
        (&a.json, report.to_json()),
        (&a.timeline, report.timeline_tsv()),
    ];
    for (path, text) in writes {
        if let Some(path) = path {
            std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    Ok(())
}

pub fn simulate(gen_config: &Path, out: &Path, tones: bool) -> Result<()> {
    require_file(gen_config, "generator config")?;
    let cfg = GeneratorConfig::load_from_path(gen_config)
        .with_context(|| format!("cannot load generator config {}", gen_config.display()))?;
    let corpus = generate(&cfg)?;
    corpus.save_to_path(out).with_context(|| format!("cannot write corpus {}", out.display()))?;
    println!(
        "wrote {} turns for {} participants over {} ms to {}",
        corpus.turns().len(),
        corpus.participants().len(),
        corpus.end(),
        out.display()
    );
    if tones {
        for (name, pcm) in corpus.participants().iter().zip(render_tones(&corpus, TONE_AMPLITUDE)) {
            let path = audio_path(out, None, name);
            write_wav(&path, &pcm)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

pub fn replay(corpus_path: &Path, model_path: &Path, events_out: Option<&Path>) -> Result<()> {
    require_file(corpus_path, "corpus")?;
    require_file(model_path, "model")?;
    let corpus = load_corpus(corpus_path)?;
    let model = load_model(model_path)?;
    let started = Instant::now();
    let mut evaluations = 0u64;
    let events = replay_corpus(&corpus, model, EngineConfig::default(), |_| evaluations += 1)?;
    let wall = started.elapsed().as_secs_f64();
    print_events(&events);
    let mut line = String::new();
    let _ = write!(
        line,
        "replayed {} ms ({} evaluations, {} changes) in {:.2} s",
        corpus.end(),
        evaluations,
        events.len(),
        wall
    );
    if wall > 0.0 {
        let _ = write!(line, ", {:.0}x real time", corpus.end() as f64 / 1000.0 / wall);
    }
    println!("{line}");
    if let Some(path) = events_out {
        let json = serde_json::to_string_pretty(&events)?;
        std::fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn mixdown(a: &MixdownArgs) -> Result<()> {
    require_file(&a.corpus, "corpus")?;
    require_file(&a.model, "model")?;
    let corpus = load_corpus(&a.corpus)?;
    let Some(listener) = corpus.participant_id(&a.listener) else {
        bail!("listener {:?} is not a participant of {}", a.listener, a.corpus.display());
    };
    let paths: Vec<PathBuf> = corpus
        .participants()
        .iter()
        .map(|name| audio_path(&a.corpus, a.audio_dir.as_deref(), name))
        .collect();
    let missing: Vec<String> = paths.iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    ensure!(missing.is_empty(), "missing audio for mixdown: {}", missing.join(", "));
    let model = load_model(&a.model)?;
    let pcm = paths.iter().map(|p| read_wav(p)).collect::<Result<Vec<_>, _>>()?;
    let (events, mut outputs) = replay_mixed(
        &corpus,
        model,
        EngineConfig::default(),
        MixerConfig::default(),
        &pcm,
        &[listener],
    )?;
    let mix = outputs.pop().expect("one listener");
    write_wav(&a.out, &mix)?;
    print_events(&events);
    println!("wrote {} samples for {} to {}", mix.len(), a.listener, a.out.display());
    Ok(())
}
