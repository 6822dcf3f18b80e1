//! File-level contracts of the CLI pipeline: mapping coverage, report
//! consistency, and the compress/compare agreement.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use vocab_squeeze::cli::{
    cmd_compare, cmd_compress, parse_method_spec, Allocation, CompareConfig, Method, RunConfig,
};
use vocab_squeeze::ingest::{estimate_distribution, parse_counts};
use vocab_squeeze::mi::{partition_mi, CompressionMap, LogBase};

fn tmp_dir(label: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(label);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_input(dir: &PathBuf, body: &str) -> PathBuf {
    let path = dir.join("input.tsv");
    let mut f = fs::File::create(&path).unwrap();
    f.write_all(body.as_bytes()).unwrap();
    path
}

fn base_config(input: PathBuf, dir: &PathBuf, method: Method, budget: usize) -> RunConfig {
    RunConfig {
        input,
        output: dir.join("mapping.tsv"),
        report: Some(dir.join("report.json")),
        method,
        budget,
        allocation: method.default_allocation(),
        epsilon: 0.05,
        seed: 0,
        log_base: LogBase::Bits,
        min_count: 1,
        shards: None,
    }
}

fn read_mapping(path: &PathBuf) -> BTreeMap<(String, String), usize> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut cols = line.split('\t');
            let feature = cols.next().unwrap().to_owned();
            let value = cols.next().unwrap().to_owned();
            let cluster: usize = cols.next().unwrap().parse().unwrap();
            assert!(cols.next().is_none());
            ((feature, value), cluster)
        })
        .collect()
}

const SMALL_INPUT: &str = "\
f1\ta\t30\t10
f1\tb\t5\t25
f1\tc\t12\t13
f1\td\t1\t0
f2\tx\t9\t1
f2\ty\t2\t18
";

#[test]
fn mapping_covers_every_value_exactly_once() {
    let dir = tmp_dir("coverage");
    let input = write_input(&dir, SMALL_INPUT);
    let cfg = base_config(input.clone(), &dir, Method::Submodular, 4);
    cmd_compress(&cfg).unwrap();

    let mapping = read_mapping(&cfg.output);
    let table = parse_counts(fs::read_to_string(&input).unwrap().as_bytes()).unwrap();
    let mut expected = 0;
    for feature in table.feature_names() {
        for value in table.feature(feature).unwrap().keys() {
            assert!(
                mapping.contains_key(&(feature.to_owned(), value.clone())),
                "missing {feature}/{value}"
            );
            expected += 1;
        }
    }
    assert_eq!(mapping.len(), expected);
}

#[test]
fn report_matches_mapping_recomputation() {
    let dir = tmp_dir("recompute");
    let input = write_input(&dir, SMALL_INPUT);
    for method in [Method::Submodular, Method::Bucketing, Method::Divisive, Method::Frequency] {
        let mut cfg = base_config(input.clone(), &dir, method, 4);
        cfg.allocation = method.default_allocation();
        cmd_compress(&cfg).unwrap();

        let mapping = read_mapping(&cfg.output);
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(cfg.report.as_ref().unwrap()).unwrap())
                .unwrap();
        let table = parse_counts(fs::read_to_string(&input).unwrap().as_bytes()).unwrap();

        for entry in report["per_feature"].as_array().unwrap() {
            let name = entry["name"].as_str().unwrap();
            let feat = estimate_distribution::<f64>(&table, name, 1).unwrap();
            let clusters: Vec<usize> = (0..feat.n())
                .map(|i| mapping[&(name.to_owned(), feat.id(i).unwrap().to_owned())])
                .collect();
            let num_clusters = clusters.iter().max().unwrap() + 1;
            let map = CompressionMap::new(clusters, num_clusters, None).unwrap();
            let recomputed = partition_mi(&feat, &map, LogBase::Bits).unwrap();
            let reported = entry["mi_after_bits"].as_f64().unwrap();
            assert!(
                (recomputed - reported).abs() < 1e-9,
                "{} {name}: recomputed {recomputed} vs reported {reported}",
                method.as_str()
            );
        }
    }
}

#[test]
fn full_budget_is_lossless_identity() {
    let dir = tmp_dir("identity");
    let input = write_input(&dir, SMALL_INPUT);
    let cfg = base_config(input, &dir, Method::Submodular, 6); // total vocab
    cmd_compress(&cfg).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.report.unwrap()).unwrap()).unwrap();
    assert_eq!(report["avg_mi_loss"].as_f64().unwrap(), 0.0);
    // Each feature fully refined.
    for entry in report["per_feature"].as_array().unwrap() {
        assert_eq!(entry["n"], entry["m"]);
        assert_eq!(
            entry["mi_before_bits"].as_f64().unwrap(),
            entry["mi_after_bits"].as_f64().unwrap()
        );
    }
}

/// The count-table rendition of the frequency adversary: the two frequent
/// values carry no signal, the four rare ones carry 1/3 bit.
const ADVERSARY_INPUT: &str = "\
f\tfreq1\t2\t2
f\tfreq2\t2\t2
f\tneg1\t0\t1
f\tneg2\t0\t1
f\tpos1\t1\t0
f\tpos2\t1\t0
";

#[test]
fn frequency_report_shows_total_loss_on_adversary() {
    let dir = tmp_dir("freq-adv");
    let input = write_input(&dir, ADVERSARY_INPUT);
    let cfg = base_config(input, &dir, Method::Frequency, 2);
    cmd_compress(&cfg).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.report.unwrap()).unwrap()).unwrap();
    let feature = &report["per_feature"][0];
    assert!((feature["mi_before_bits"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!(feature["mi_after_bits"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(report["avg_mi_loss"].as_f64().unwrap(), 1.0);
}

#[test]
fn compare_single_cell_matches_compress_report() {
    let dir = tmp_dir("compare-one");
    let input = write_input(&dir, SMALL_INPUT);
    let cfg = base_config(input.clone(), &dir, Method::Submodular, 4);
    cmd_compress(&cfg).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.report.unwrap()).unwrap()).unwrap();
    let from_compress = report["avg_mi_loss"].as_f64().unwrap();

    let csv = dir.join("compare.csv");
    cmd_compare(&CompareConfig {
        input,
        output: csv.clone(),
        cells: vec![parse_method_spec("submodular").unwrap()],
        budgets: vec![4],
        epsilon: 0.05,
        seed: 0,
        log_base: LogBase::Bits,
        min_count: 1,
        shards: None,
    })
    .unwrap();
    let body = fs::read_to_string(&csv).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "method,allocation,budget,avg_mi_loss,status");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "submodular");
    assert_eq!(row[2], "4");
    assert_eq!(row[4], "ok");
    let from_compare: f64 = row[3].parse().unwrap();
    assert_eq!(from_compare, from_compress);
    assert!(lines.next().is_none());
}

#[test]
fn min_count_filtered_values_land_in_an_oov_cluster() {
    let dir = tmp_dir("min-count");
    let input = write_input(&dir, SMALL_INPUT);
    let mut cfg = base_config(input, &dir, Method::Submodular, 5);
    cfg.min_count = 2; // f1/d has a single occurrence
    cmd_compress(&cfg).unwrap();
    let mapping = read_mapping(&cfg.output);
    let oov = mapping[&("f1".to_owned(), "d".to_owned())];
    // The filtered value gets the highest cluster id of its feature.
    let max_f1 = mapping
        .iter()
        .filter(|((f, _), _)| f == "f1")
        .map(|(_, &c)| c)
        .max()
        .unwrap();
    assert_eq!(oov, max_f1);
    // Live values keep dense ids below it.
    for v in ["a", "b", "c"] {
        assert!(mapping[&("f1".to_owned(), v.to_owned())] < oov);
    }
}

#[test]
fn compare_survives_failing_cells() {
    let dir = tmp_dir("compare-fail");
    let input = write_input(&dir, SMALL_INPUT);
    let csv = dir.join("compare.csv");
    cmd_compare(&CompareConfig {
        input,
        output: csv.clone(),
        // Budget 1 is below the two-feature floor: the cell must fail but the
        // sweep must finish.
        cells: vec![(Method::Submodular, Allocation::Global)],
        budgets: vec![1, 4],
        epsilon: 0.05,
        seed: 0,
        log_base: LogBase::Bits,
        min_count: 1,
        shards: None,
    })
    .unwrap();
    let body = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains("failed"));
    assert!(lines[2].ends_with("ok"));
}

#[test]
fn nats_and_bits_agree_on_the_chosen_mapping() {
    let dir = tmp_dir("log-base");
    let input = write_input(&dir, SMALL_INPUT);
    let mut bits_cfg = base_config(input.clone(), &dir, Method::Submodular, 4);
    bits_cfg.output = dir.join("bits.tsv");
    bits_cfg.report = Some(dir.join("bits.json"));
    cmd_compress(&bits_cfg).unwrap();
    let mut nats_cfg = base_config(input, &dir, Method::Submodular, 4);
    nats_cfg.log_base = LogBase::Nats;
    nats_cfg.output = dir.join("nats.tsv");
    nats_cfg.report = Some(dir.join("nats.json"));
    cmd_compress(&nats_cfg).unwrap();
    // The argmax is base-invariant, so the mappings coincide; the report is
    // normalized to bits either way.
    assert_eq!(
        fs::read(dir.join("bits.tsv")).unwrap(),
        fs::read(dir.join("nats.tsv")).unwrap()
    );
    let bits: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("bits.json")).unwrap()).unwrap();
    let nats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("nats.json")).unwrap()).unwrap();
    let b = bits["per_feature"][0]["mi_before_bits"].as_f64().unwrap();
    let n = nats["per_feature"][0]["mi_before_bits"].as_f64().unwrap();
    assert!((b - n).abs() < 1e-12);
}

#[test]
fn distributed_method_produces_consistent_mapping() {
    let dir = tmp_dir("distributed");
    let input = write_input(&dir, SMALL_INPUT);
    let mut cfg = base_config(input, &dir, Method::SubmodularDistributed, 4);
    cfg.allocation = Allocation::Uniform;
    cfg.epsilon = 0.3;
    cmd_compress(&cfg).unwrap();
    let mapping = read_mapping(&cfg.output);
    assert_eq!(mapping.len(), 6);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.report.unwrap()).unwrap()).unwrap();
    let loss = report["avg_mi_loss"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&loss));
}
