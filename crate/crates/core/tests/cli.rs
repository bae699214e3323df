use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use synthpanel::classify::write_tweets;
use synthpanel::events::write_events;
use synthpanel::sim::{synthetic_corpus, CorpusConfig};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn synthpanel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synthpanel"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Data rows of an emitted CSV as header-keyed maps; checks the provenance line.
fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let (first, rest) = text.split_once('\n').unwrap();
    assert!(first.starts_with("# synthpanel 0.1.0 config="), "{first}");
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            header
                .iter()
                .zip(rec.unwrap().iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

fn f(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

fn small_corpus(dir: &Path, effect: f64, seed: u64) {
    let config = CorpusConfig {
        countries: ["KE", "TZ", "RW", "UG", "NG", "GH", "ZA", "ET"]
            .map(String::from)
            .to_vec(),
        pre_days: 160,
        post_days: 40,
        effect,
        ..CorpusConfig::default()
    };
    let (tweets, events) = synthetic_corpus(&config, seed);
    write_tweets(&tweets, fs::File::create(dir.join("tweets.csv")).unwrap()).unwrap();
    write_events(&events, fs::File::create(dir.join("events.csv")).unwrap()).unwrap();
}

#[test]
fn build_panel_matches_golden_files() {
    let out = tempfile::tempdir().unwrap();
    let golden = fixtures().join("golden");
    ok(synthpanel(
        &fixtures(),
        &[
            "build-panel",
            "--config",
            "fixture.toml",
            "-o",
            out.path().to_str().unwrap(),
        ],
    ));
    let mut names: Vec<_> = fs::read_dir(&golden).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 15);
    for name in names {
        assert_eq!(
            fs::read(out.path().join(&name)).unwrap(),
            fs::read(golden.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn golden_panels_agree_with_hand_counts() {
    let text = fs::read_to_string(fixtures().join("tweets_golden.csv")).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let v: Vec<&str> = line.split(',').collect();
        let want = match v[3].split_once('/') {
            Some((n, d)) => n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap(),
            None => v[3].parse().unwrap(),
        };
        let rows = read_csv(&fixtures().join(format!("golden/panel_{}.csv", v[0])));
        let row = rows
            .iter()
            .find(|r| r["country"] == v[1] && r["period"] == v[2])
            .unwrap();
        assert_eq!(f(row, "value"), want, "{line}");
    }
}

#[test]
fn empty_input_gives_zero_panels_over_the_window() {
    let dir = tempfile::tempdir().unwrap();
    let header = synthpanel::classify::TWEET_HEADER.join(",");
    fs::write(dir.path().join("tweets.csv"), format!("{header}\n")).unwrap();
    ok(synthpanel(
        dir.path(),
        &[
            "build-panel",
            "--tweets",
            "tweets.csv",
            "--pre-days",
            "30",
            "--post-days",
            "20",
            "-o",
            "out",
        ],
    ));
    let text = fs::read_to_string(dir.path().join("out/panel_tweets.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().nth(1), Some("outcome,country,period,value"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(fixtures().join("tweets.csv"), dir.path().join("tweets.csv")).unwrap();
    fs::copy(fixtures().join("events.csv"), dir.path().join("events.csv")).unwrap();
    for out in ["a", "b"] {
        ok(synthpanel(
            dir.path(),
            &[
                "build-panel",
                "--tweets",
                "tweets.csv",
                "--events",
                "events.csv",
                "-o",
                out,
            ],
        ));
        ok(synthpanel(dir.path(), &["diffusion", "--agents", "2000", "-o", out]));
    }
    let mut n = 0;
    for e in fs::read_dir(dir.path().join("a")).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(
            fs::read(dir.path().join("a").join(&name)).unwrap(),
            fs::read(dir.path().join("b").join(&name)).unwrap()
        );
        n += 1;
    }
    assert!(n > 15);
}

#[test]
fn malformed_input_exits_2_with_row_number() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixtures().join("tweets.csv")).unwrap();
    let broken = text.replacen("2018-06-27T09:00:00Z", "yesterday", 1);
    fs::write(dir.path().join("tweets.csv"), broken).unwrap();
    let out = synthpanel(dir.path(), &["build-panel", "--tweets", "tweets.csv", "-o", "out"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tweets.csv:3: bad timestamp"), "{err}");

    let missing = synthpanel(dir.path(), &["estimate", "--events", "nope.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    let threads = Command::new(env!("CARGO_BIN_EXE_synthpanel"))
        .current_dir(dir.path())
        .args(["diffusion", "--agents", "0", "-o", "out"])
        .env("SYNTHPANEL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

/// Events for `countries` over 30 days before and 20 after the anchor, with
/// per-country daily counts given by `count(country index, day)`.
fn write_event_panel(path: &Path, countries: &[&str], count: impl Fn(usize, i64) -> usize) {
    let anchor = chrono::NaiveDate::from_ymd_opt(2018, 7, 1).unwrap();
    let mut text = String::from("dataset,country_code,date,event_type\n");
    for (i, c) in countries.iter().enumerate() {
        for day in -30..20 {
            let date = anchor + chrono::Duration::days(day);
            for _ in 0..count(i, day) {
                text.push_str(&format!("ACLED,{c},{date},Riots/protests\nICEWS,{c},{date},Protest\n"));
            }
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn identical_panels_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    write_event_panel(
        &dir.path().join("events.csv"),
        &["UG", "KE", "TZ", "RW", "NG", "GH"],
        |_, d| (d.rem_euclid(3) + 1) as usize,
    );
    let out = synthpanel(
        dir.path(),
        &["estimate", "--events", "events.csv", "--pre-days", "30", "-o", "out"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("events"));
}

#[test]
fn treated_copy_of_a_donor_has_flat_zero_effect() {
    let dir = tempfile::tempdir().unwrap();
    // UG copies KE; the rest follow their own patterns
    write_event_panel(
        &dir.path().join("events.csv"),
        &["UG", "KE", "TZ", "RW", "NG", "GH", "ZA"],
        |i, d| {
            let i = if i == 0 { 1 } else { i };
            ((d + 40).rem_euclid(i as i64 + 2) + i as i64 / 2) as usize
        },
    );
    ok(synthpanel(
        dir.path(),
        &["estimate", "--events", "events.csv", "--pre-days", "30", "-o", "out"],
    ));
    let effects = read_csv(&dir.path().join("out/effects_events.csv"));
    assert_eq!(effects.len(), 5);
    for row in &effects {
        assert!(f(row, "effect").abs() < 1e-9, "{row:?}");
    }
    let weights = read_csv(&dir.path().join("out/weights_events.csv"));
    assert_eq!(weights[0]["donor"], "KE");
    assert!((f(&weights[0], "weight") - 1.0).abs() < 1e-9);
    let total: f64 = weights.iter().map(|r| f(r, "weight")).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn estimate_and_ten_day_aggregate_agree() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), -0.15, 11);
    let base = [
        "--tweets",
        "tweets.csv",
        "--events",
        "events.csv",
        "--outcome",
        "tweets",
        "--outcome",
        "events",
    ];
    let mut est = vec!["estimate"];
    est.extend(base);
    est.extend(["-o", "est"]);
    let mut agg = vec!["aggregate"];
    agg.extend(base);
    agg.extend(["-o", "agg"]);
    ok(synthpanel(dir.path(), &est));
    ok(synthpanel(dir.path(), &agg));

    let summary = read_csv(&dir.path().join("agg/aggregate_summary.csv"));
    let averaged = read_csv(&dir.path().join("est/averaged_effects.csv"));
    for outcome in ["tweets", "events"] {
        let a = summary
            .iter()
            .find(|r| r["outcome"] == outcome && r["period_days"] == "10")
            .unwrap();
        let e = averaged.iter().find(|r| r["outcome"] == outcome).unwrap();
        for key in ["value", "band_lo", "band_hi", "n_placebos"] {
            assert_eq!(a[key], e[key], "{outcome} {key}");
        }
        let per_period: Vec<_> = read_csv(&dir.path().join(format!("agg/aggregate_{outcome}.csv")))
            .into_iter()
            .filter(|r| r["period_days"] == "10")
            .collect();
        let effects = read_csv(&dir.path().join(format!("est/effects_{outcome}.csv")));
        assert_eq!(per_period.len(), effects.len());
        for (a, e) in per_period.iter().zip(&effects) {
            for key in ["period", "effect", "band_lo", "band_hi"] {
                assert_eq!(a[key], e[key], "{outcome} {key}");
            }
        }
    }
    let tweets = averaged.iter().find(|r| r["outcome"] == "tweets").unwrap();
    assert!(f(tweets, "value") < f(tweets, "band_lo"), "{tweets:?}");
}

#[test]
fn falsify_on_null_corpus_straddles_zero() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), 0.0, 5);
    ok(synthpanel(
        dir.path(),
        &[
            "falsify",
            "--tweets",
            "tweets.csv",
            "--events",
            "events.csv",
            "--pre-days",
            "80",
            "--cutoff-days",
            "60",
            "-o",
            "out",
        ],
    ));
    let rows = read_csv(&dir.path().join("out/falsify_summary.csv"));
    assert_eq!(rows.len(), 14);
    assert!(rows.iter().all(|r| f(r, "band_lo") <= 0.0 && f(r, "band_hi") >= 0.0));
    let inside = rows
        .iter()
        .filter(|r| f(r, "band_lo") <= f(r, "value") && f(r, "value") <= f(r, "band_hi"))
        .count();
    assert!(2 * inside > rows.len(), "{inside} of {} inside", rows.len());
    let positive = rows.iter().filter(|r| f(r, "value") > 0.0).count();
    assert!(positive > 0 && positive < rows.len());
    for r in &rows {
        assert_eq!(r["last_fit_period"], "-7");
        assert_eq!((r["holdout_first"].as_str(), r["holdout_last"].as_str()), ("-6", "-1"));
    }
}

#[test]
fn diffusion_sweep_with_negative_rho_raises_stable_participation() {
    let dir = tempfile::tempdir().unwrap();
    let prices: Vec<String> = (0..=10).map(|i| format!("{}", i as f64 / 10.0)).collect();
    fs::write(
        dir.path().join("run.toml"),
        format!(
            "rho = -0.6\nagents = 0\ngrid_n = 1001\nprices = [{}]\n",
            prices.join(", ")
        ),
    )
    .unwrap();
    ok(synthpanel(
        dir.path(),
        &["diffusion", "--config", "run.toml", "-o", "out"],
    ));
    let rows = read_csv(&dir.path().join("out/diffusion_equilibria.csv"));
    let mut by_q: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r["stability"] == "stable") {
        by_q.entry(r["q"].clone()).or_default().push(f(r, "x"));
    }
    assert_eq!(by_q.len(), prices.len());
    let mut lows: Vec<(f64, f64, f64)> = by_q
        .iter()
        .map(|(q, xs)| {
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (q.parse().unwrap(), lo, hi)
        })
        .collect();
    lows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in lows.windows(2) {
        assert!(w[1].1 >= w[0].1 - 1e-9 && w[1].2 >= w[0].2 - 1e-9, "{w:?}");
    }
    assert!(lows.last().unwrap().1 > lows[0].1);
    let t1 = read_csv(&dir.path().join("out/diffusion_theorem1.csv"));
    assert_eq!(t1.len(), 10);
    assert!(t1.iter().all(|r| r["passed"] == "true" && f(r, "min_diff") >= -1e-9));
}
