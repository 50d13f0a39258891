use std::fs;
use std::path::Path;
use std::process::Command;

fn duelroute(args: &[&str], root: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_duelroute"))
        .args(args)
        .env("DUELROUTE_RUN_ROOT", root)
        .output()
        .expect("binary runs")
}

const SMOKE: &str = r#"
total_episodes = 10
stage_switch = 5
arena_set_size = 4
arena_interval = 5
checkpoint_interval = 5
record_wall_time = false

[problem]
kind = "tsp"
size = 5

[planner]
n_simulations = 8
m_root = 4

[net]
embed_dim = 16
n_heads = 2
n_layers = 1
ffn_dim = 16
batch_size = 8
"#;

#[test]
fn gen_train_eval_plot_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let inst = root.join("inst");
    let out = duelroute(&["gen", "--problem", "tsp", "-n", "5", "--count", "3", "--seed", "7", "--out", inst.to_str().unwrap()], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(&inst).unwrap().count(), 3);

    let cfg = root.join("smoke.toml");
    fs::write(&cfg, SMOKE).unwrap();
    let out = duelroute(&["train", "--config", cfg.to_str().unwrap(), "--stop-after", "6"], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = root.join("smoke");
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 6);
    assert!(fs::read_to_string(run.join("config.toml")).unwrap().contains("total_episodes = 10"));

    // resuming appends the remaining rows and keeps the earlier ones
    let out = duelroute(&["train", "--resume", "--run-dir", run.to_str().unwrap()], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resumed = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(resumed.lines().count(), 1 + 10);
    assert!(resumed.starts_with(&metrics));

    let results = root.join("results.csv");
    for mode in ["greedy", "mcts"] {
        let out = duelroute(
            &[
                "eval",
                "--checkpoint",
                run.to_str().unwrap(),
                "--instances",
                inst.to_str().unwrap(),
                "--mode",
                mode,
                "--budget",
                "8",
                "--m-root",
                "4",
                "--out",
                results.to_str().unwrap(),
            ],
            root,
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = fs::read_to_string(&results).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "instance,method,objective,oracle,gap,feasible,route");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.contains(&format!(",{mode},")) && r.contains(",true,")));
    }

    let svg = root.join("curves.svg");
    let out = duelroute(&["plot", "--metrics", run.join("metrics.csv").to_str().unwrap(), "--out", svg.to_str().unwrap(), "--window", "3"], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("stage-switch"));
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    assert_eq!(duelroute(&["bogus"], root).status.code(), Some(1));
    assert_eq!(duelroute(&["train"], root).status.code(), Some(1));
    let empty = root.join("empty.csv");
    fs::write(&empty, "episode,stage,learner_obj,competitor_obj,z,policy_loss,value_loss,soc_per_customer,wall_time\n").unwrap();
    let out = duelroute(&["plot", "--metrics", empty.to_str().unwrap(), "--out", root.join("x.svg").to_str().unwrap()], root);
    assert_eq!(out.status.code(), Some(2));
    let out = duelroute(&["eval", "--checkpoint", root.join("missing").to_str().unwrap(), "--instances", root.to_str().unwrap()], root);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}
