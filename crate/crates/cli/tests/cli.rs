//! The `floorspace` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use floorspace_core::learner::FloorModel;
use floorspace_core::wav::{read_wav, write_wav};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_floorspace"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Nonzero exit with exactly one diagnostic line.
fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "diagnostic: {err:?}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TWO_FLOORS: &str = r#"
seed = 3
duration_ms = 240000
participants = 4
names = ["ann", "bo", "cy", "di"]

[[schedule]]
at_ms = 0
floors = [[0, 1], [2, 3]]

[[schedule]]
at_ms = 120000
floors = [[0, 2], [1, 3]]
"#;

const ONE_FLOOR: &str = r#"
seed = 4
duration_ms = 120000
participants = 3

[[schedule]]
at_ms = 0
floors = [[0, 1, 2]]
"#;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    /// Simulated two-floor corpus and a model trained on it.
    fn trained(&self) -> (PathBuf, PathBuf) {
        let cfg = self.write("gen.toml", TWO_FLOORS);
        let corpus = self.path("two.fsc");
        let model = self.path("two.fsm");
        ok(&["simulate", "--gen-config", p(&cfg), "--out", p(&corpus)]);
        ok(&["train", "--corpus", p(&corpus), "--out", p(&model)]);
        (corpus, model)
    }
}

#[test]
fn simulate_is_deterministic_and_writes_tones() {
    let f = Fixture::new();
    let cfg = f.write("gen.toml", TWO_FLOORS);
    let (a, b) = (f.path("a.fsc"), f.path("b.fsc"));
    let out = ok(&["simulate", "--gen-config", p(&cfg), "--out", p(&a), "--tones"]);
    assert!(out.contains("4 participants"), "{out}");
    ok(&["simulate", "--gen-config", p(&cfg), "--out", p(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    for name in ["ann", "bo", "cy", "di"] {
        let pcm = read_wav(&f.path(&format!("a.{name}.wav"))).unwrap();
        assert_eq!(pcm.len(), 240_000 * 8);
    }
    let err = fails(&["simulate", "--gen-config", p(&f.path("nope.toml")), "--out", p(&a)]);
    assert!(err.contains("does not exist"), "{err}");
    let bad = f.write("bad.toml", "seed = 1\nduration_ms = 10\nparticipants = 2\nschedule = []\ncolour = 1\n");
    fails(&["simulate", "--gen-config", p(&bad), "--out", p(&a)]);
}

#[test]
fn train_writes_a_deterministic_model() {
    let f = Fixture::new();
    let (corpus, model) = f.trained();
    let again = f.path("again.fsm");
    let out = ok(&["train", "--corpus", p(&corpus), "--out", p(&again)]);
    assert!(out.contains("SAME") && out.contains("DIFF"), "{out}");
    assert!(out.contains("trp_gap") && out.contains("overlap_w3"), "{out}");
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());
    let m = FloorModel::load_from_path(&model).unwrap();
    assert!(m.priors.iter().all(|&q| q > 0.0 && q < 1.0), "{:?}", m.priors);

    let coarse = f.path("coarse.fsm");
    ok(&["train", "--corpus", p(&corpus), "--out", p(&coarse), "--sample-period", "5000"]);
    assert_ne!(std::fs::read(&model).unwrap(), std::fs::read(&coarse).unwrap());
}

#[test]
fn train_rejects_single_floor_and_unlabeled_input() {
    let f = Fixture::new();
    let cfg = f.write("one.toml", ONE_FLOOR);
    let corpus = f.path("one.fsc");
    ok(&["simulate", "--gen-config", p(&cfg), "--out", p(&corpus)]);
    let err = fails(&["train", "--corpus", p(&corpus), "--out", p(&f.path("m.fsm"))]);
    assert!(err.contains("no DIFF instances"), "{err}");

    let unlabeled = f.write(
        "raw.fsc",
        "#floorspace-corpus v1\nparticipants a b\nturn participant=a start_ms=0 end_ms=900\nturn participant=b start_ms=1000 end_ms=1500\n",
    );
    let err = fails(&["train", "--corpus", p(&unlabeled), "--out", p(&f.path("m.fsm"))]);
    assert!(err.contains("unlabeled"), "{err}");
    assert!(!f.path("m.fsm").exists());
    fails(&["train", "--corpus", p(&f.path("missing.fsc")), "--out", p(&f.path("m.fsm"))]);
}

#[test]
fn eval_reports_and_is_deterministic() {
    let f = Fixture::new();
    let (corpus, model) = f.trained();
    let (r1, r2, json, tsv) = (f.path("r1.txt"), f.path("r2.txt"), f.path("r.json"), f.path("t.tsv"));
    let line = ok(&["eval", "--model", p(&model), "--corpus", p(&corpus), "--report", p(&r1), "--json", p(&json), "--timeline", p(&tsv)]);
    assert!(line.contains("configuration accuracy") && line.contains("pairwise accuracy"), "{line}");
    ok(&["eval", "--model", p(&model), "--corpus", p(&corpus), "--report", p(&r2)]);
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["mode"], "model");
    let rows = std::fs::read_to_string(&tsv).unwrap();
    // one row per 30 ms evaluation period plus the header
    assert_eq!(rows.lines().count(), 240_000 / 30 + 1);

    let oracle = ok(&["eval", "--oracle", "--corpus", p(&corpus)]);
    assert!(oracle.contains("configuration accuracy 1.0000  pairwise accuracy 1.0000"), "{oracle}");
    fails(&["eval", "--oracle", "--model", p(&model), "--corpus", p(&corpus)]);
    fails(&["eval", "--corpus", p(&corpus)]);

    let short = f.write("short.fsc", "#floorspace-corpus v1\nparticipants a b\nduration_ms 10000\nturn participant=a start_ms=0 end_ms=900 floor=0\n");
    let err = fails(&["eval", "--model", p(&model), "--corpus", p(&short)]);
    assert!(err.contains("shorter than the 30000 ms warm-up"), "{err}");
    let err = fails(&["eval", "--model", p(&corpus), "--corpus", p(&corpus)]);
    assert!(err.contains("cannot load model"), "{err}");
}

#[test]
fn replay_prints_the_change_log() {
    let f = Fixture::new();
    let (corpus, model) = f.trained();
    let events = f.path("events.json");
    let out = ok(&["replay", "--corpus", p(&corpus), "--model", p(&model), "--events", p(&events)]);
    let last = out.lines().last().unwrap();
    assert!(last.starts_with("replayed 240000 ms (8000 evaluations"), "{last}");
    let log: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&events).unwrap()).unwrap();
    assert!(!log.is_empty());
    assert_eq!(out.lines().count(), log.len() + 1);
}

#[test]
fn mixdown_in_one_floor_is_the_saturating_sum_of_the_others() {
    let f = Fixture::new();
    // everyone speaks at once from the start and a model that always says SAME
    let corpus = f.write(
        "talk.fsc",
        "#floorspace-corpus v1\nparticipants a b c\nduration_ms 2000\n\
         turn participant=a start_ms=0 end_ms=900 floor=0\n\
         turn participant=b start_ms=5 end_ms=1900 floor=0\n\
         turn participant=c start_ms=10 end_ms=1500 floor=0\n",
    );
    let model = f.path("same.fsm");
    FloorModel::uniform(0.99).save_to_path(&model).unwrap();
    let levels = [("a", 1000i16), ("b", 30_000), ("c", -7)];
    for (name, v) in levels {
        write_wav(&f.path(&format!("talk.{name}.wav")), &vec![v; 16_000]).unwrap();
    }
    let out = f.path("a.mix.wav");
    ok(&["mixdown", "--corpus", p(&corpus), "--model", p(&model), "--listener", "a", "--out", p(&out)]);
    let mix = read_wav(&out).unwrap();
    assert_eq!(mix.len(), 16_000);
    // past the initial 250 ms ramp to unit gain
    assert!(mix[300 * 8..].iter().all(|&x| x == 30_000 - 7), "{:?}", &mix[2400..2410]);

    let out = f.path("b.mix.wav");
    ok(&["mixdown", "--corpus", p(&corpus), "--model", p(&model), "--listener", "b", "--out", p(&out)]);
    assert!(read_wav(&out).unwrap()[300 * 8..].iter().all(|&x| x == 993));

    let err = fails(&["mixdown", "--corpus", p(&corpus), "--model", p(&model), "--listener", "zed", "--out", p(&out)]);
    assert!(err.contains("not a participant"), "{err}");
    std::fs::remove_file(f.path("talk.c.wav")).unwrap();
    let err = fails(&["mixdown", "--corpus", p(&corpus), "--model", p(&model), "--listener", "a", "--out", p(&out)]);
    assert!(err.contains("missing audio") && err.contains("talk.c.wav"), "{err}");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn serve_answers_client_commands() {
    let f = Fixture::new();
    let model = f.path("m.fsm");
    FloorModel::uniform(0.5).save_to_path(&model).unwrap();
    let cfg = f.write("server.toml", "model = \"m.fsm\"\nport = 1\nmax_participants = 4\n");
    let port = free_port().to_string();
    let server = Server(
        bin()
            .args(["serve", "--config", p(&cfg), "--port", &port, "--audio-port", "0", "--control-port", "0"])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let url = format!("http://127.0.0.1:{port}");
    let started = Instant::now();
    let status = loop {
        let out = run(&["status", "--server", &url]);
        if out.status.success() {
            break String::from_utf8(out.stdout).unwrap();
        }
        assert!(started.elapsed() < Duration::from_secs(10), "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(status.contains("\"participants\": []"), "{status}");
    assert!(status.contains("configuration: none yet"), "{status}");
    assert!(ok(&["events", "--server", &url]).contains("next: 0"));
    let err = fails(&["pin", "--server", &url, "--owner", "ghost", "--floor", "ghost"]);
    assert!(err.contains("404"), "{err}");
    let err = fails(&["unpin", "--server", &url, "--owner", "ghost"]);
    assert!(err.contains("404"), "{err}");

    // the HTTP port is now taken
    let err = fails(&["serve", "--model", p(&model), "--port", &port, "--audio-port", "0", "--control-port", "0"]);
    assert!(err.contains("cannot bind HTTP"), "{err}");
    drop(server);
    let err = fails(&["status", "--server", &url]);
    assert!(err.contains("request failed"), "{err}");
}

#[test]
fn serve_validates_before_binding() {
    let f = Fixture::new();
    let err = fails(&["serve", "--port", "0"]);
    assert!(err.contains("model"), "{err}");
    let cfg = f.write("bad.toml", "model = \"m.fsm\"\nspeed = 3\n");
    let err = fails(&["serve", "--config", p(&cfg)]);
    assert!(err.contains("speed"), "{err}");
    let err = fails(&["serve", "--model", "m.fsm", "--max-participants", "0"]);
    assert!(err.contains("max_participants"), "{err}");
    fails(&["serve", "--model", p(&f.path("absent.fsm")), "--port", "0", "--audio-port", "0", "--control-port", "0"]);
}
