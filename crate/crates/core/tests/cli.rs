use std::path::Path;
use std::process::{Command, Output};

use pcpshare::protocol::{BuyerRequest, PreferenceWeights, Scenario, SellerOffer};

fn pcpshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcpshare"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// Nobody asks for any demand, so every pair has alpha = 0.
fn no_demand_market() -> Scenario {
    let buyer = |id, x| BuyerRequest {
        id,
        x,
        y: 0,
        price: 500,
        d_max: 1000,
        demands: vec![0],
        demand_prices: vec![0],
        weights: PreferenceWeights { w_d: 1000, w_r: 1000, w_alpha: vec![1000] },
        arrival_round: 0,
        withdraw_round: None,
    };
    let seller = |id, x, price| SellerOffer {
        id,
        x,
        y: 0,
        price,
        demands: vec![0],
        demand_prices: vec![0],
        arrival_round: 0,
    };
    Scenario {
        k: 1,
        area: 3000,
        buyers: vec![buyer(1, 0), buyer(2, 100)],
        sellers: vec![seller(10, 50, 500), seller(11, 120, 450)],
    }
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = pcpshare(&["gen", "-i", "4", "-j", "3", "-k", "2", "--seed", "9", "--out", p(out)]);
        assert!(o.status.success());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let s = Scenario::from_json(&text).unwrap();
    assert_eq!((s.buyers.len(), s.sellers.len(), s.k), (4, 3, 2));

    let other = pcpshare(&["gen", "-i", "4", "-j", "3", "-k", "2", "--seed", "10"]);
    assert_ne!(stdout(&other), text);
}

#[test]
fn simulate_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.json");
    let log = dir.path().join("log.jsonl");
    let csv = dir.path().join("m.csv");
    assert!(pcpshare(&["gen", "-i", "3", "-j", "3", "-k", "1", "--seed", "2", "--out", p(&scen)]).status.success());

    let o = pcpshare(&["simulate", p(&scen), "--bits", "128", "--out", p(&csv), "--log", p(&log)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let matches = std::fs::read_to_string(&csv).unwrap();
    assert!(matches.starts_with("buyer_id,seller_id,w_index,round\n"));
    let log = std::fs::read_to_string(&log).unwrap();
    assert!(log.lines().count() > 0);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["bytes"].as_u64().unwrap() > 0);
    }

    let o = pcpshare(&["verify", p(&scen), "--bits", "128"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains(": ok ("));
}

#[test]
fn verify_random_batch() {
    let o = pcpshare(&["verify", "--random", "3", "--bits", "128", "--policy", "strict"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().filter(|l| l.contains(": ok")).count(), 3);
}

#[test]
fn policies_diverge_without_demands() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.json");
    std::fs::write(&scen, no_demand_market().to_json()).unwrap();

    let relaxed = pcpshare(&["simulate", p(&scen), "--bits", "128", "--policy", "relaxed"]);
    let strict = pcpshare(&["simulate", p(&scen), "--bits", "128", "--policy", "strict"]);
    assert!(relaxed.status.success() && strict.status.success());
    assert_eq!(stdout(&relaxed), "buyer_id,seller_id,w_index,round\n1,10,50000,0\n2,11,70000,0\n");
    assert_eq!(stdout(&strict), "buyer_id,seller_id,w_index,round\n");
}

#[test]
fn counters_report() {
    let o = pcpshare(&["counters", "-i", "2", "-j", "3", "-k", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("check,formula,I,J,k,expected,observed,status\n"));
    assert!(out.contains("proxy_he_ops,"));
    assert!(out.contains(",42,42,"));
    assert!(out.contains(",52,52,"));
    assert!(!out.contains("MISMATCH"));
}

#[test]
fn bench_small_csv() {
    let o = pcpshare(&["bench", "--bits", "128", "--trials", "5", "--warmup", "1", "--repeats", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 5);
    assert!(out.contains("n_plus_one,encrypt_optimized,128,5,"));
}

#[test]
fn exit_codes() {
    assert_eq!(pcpshare(&["bogus"]).status.code(), Some(2));
    assert_eq!(pcpshare(&["simulate", "/nonexistent/s.json"]).status.code(), Some(2));
    assert_eq!(pcpshare(&["verify"]).status.code(), Some(2));
    assert_eq!(pcpshare(&["bench", "--trials", "3", "--warmup", "3"]).status.code(), Some(2));
    assert_eq!(pcpshare(&["gen", "--density", "2"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"k\": 1}").unwrap();
    assert_eq!(pcpshare(&["simulate", p(&bad)]).status.code(), Some(2));
}
