use std::collections::HashMap;
use std::path::PathBuf;
use std::process::{Command, Output};

use nalgebra::DMatrix;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_procrustes"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("procrustes-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

/// Scalar `key value` lines of a report.
fn fields(report: &str) -> HashMap<String, String> {
    report
        .lines()
        .filter_map(|l| l.split_once(' '))
        .filter(|(k, _)| *k != "x" && *k != "step")
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn num(f: &HashMap<String, String>, key: &str) -> f64 {
    f.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

fn x_of(report: &str) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = report
        .lines()
        .filter_map(|l| l.strip_prefix("x "))
        .map(|l| l.split(' ').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

#[test]
fn planted_permutation_is_recovered_by_the_relaxation() {
    let dir = scratch("perm");
    let file = dir.join("perm.json");
    let (code, _, _) = run(bin().args(["gen", "--kind", "permutation", "--m", "4", "--n", "4", "--p", "12", "--q", "4"])
        .args(["--seed", "5", "-o"])
        .arg(&file));
    assert_eq!(code, 0);
    let (code, out, _) = run(bin().arg("solve").arg(&file).args(["--method", "relax"]));
    assert_eq!(code, 0);
    let f = fields(&out);
    assert_eq!(f["status"], "optimal");
    for key in ["permutation.row_sums", "permutation.col_sums", "permutation.o_max", "permutation.z_min"] {
        assert!(num(&f, key) <= 1e-6, "{key} = {}", f[key]);
    }
    assert_eq!(f["eps_rank"], "4");
    assert_eq!(f["audit"], "ok");
}

#[test]
fn reported_residuals_follow_from_the_printed_x() {
    let dir = scratch("audit");
    let file = dir.join("orth.json");
    run(bin().args(["gen", "--kind", "orthogonal", "--noise", "0.3", "--seed", "1", "--norm", "fro", "-o"]).arg(&file));
    let (code, out, _) = run(bin().arg("solve").arg(&file));
    assert_eq!(code, 0);
    let f = fields(&out);
    let x = x_of(&out);
    assert_eq!(x.shape(), (4, 4));
    let orth = (x.transpose() * &x - DMatrix::<f64>::identity(4, 4)).norm();
    assert!((orth - num(&f, "residual.orthogonality")).abs() <= 1e-9);
    // objective of the printed X against the problem data
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    let mat = |key: &str| {
        let rows: Vec<Vec<f64>> = serde_json::from_value(doc[key].clone()).unwrap();
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    };
    let value = (mat("C") - mat("A") * &x * mat("B")).norm_squared();
    assert!((value - num(&f, "objective")).abs() <= 1e-9 * value.max(1.0));
    assert!((num(&f, "norm_value") - value.sqrt()).abs() <= 1e-9);
    assert!(num(&f, "objective") >= num(&f, "bracket.l0") - 1e-6);
    assert!(num(&f, "objective") <= num(&f, "bracket.u0") + 1e-12);
}

#[test]
fn gen_output_is_canonical_and_deterministic() {
    let (code, first, _) = run(bin().args(["gen", "--kind", "oblique", "--noise", "0.5", "--seed", "9"]));
    assert_eq!(code, 0);
    let (_, second, _) = run(bin().args(["gen", "--kind", "oblique", "--noise", "0.5", "--seed", "9"]));
    assert_eq!(first, second);
    let value: serde_json::Value = serde_json::from_str(&first).unwrap();
    // numbers read back exactly
    let again: serde_json::Value = serde_json::from_str(&serde_json::to_string(&value).unwrap()).unwrap();
    assert_eq!(again, value);
    assert!(first.contains("0.9541427480165181,"));
    assert_eq!(value["A"][1][2].as_f64().unwrap(), 0.9541427480165181);
    assert_eq!(value["map"], "weighted");
    assert_eq!(value["constraints"][0], "oblique");
    assert_eq!(value["seed"], 9);
}

#[test]
fn non_isomorphic_graphs_exit_one() {
    let dir = scratch("graphs");
    let (tri, path) = (dir.join("tri.json"), dir.join("path.json"));
    std::fs::write(&tri, "[[0, 1, 1], [1, 0, 1], [1, 1, 0]]").unwrap();
    std::fs::write(&path, "[[0, 1, 0], [1, 0, 1], [0, 1, 0]]").unwrap();
    let (code, out, _) = run(bin().arg("graphiso").arg(&tri).arg(&path));
    assert_eq!(code, 1);
    assert_eq!(fields(&out)["status"], "not_isomorphic");
}

#[test]
fn generated_graph_pair_is_isomorphic() {
    let dir = scratch("iso");
    let (a, b) = (dir.join("a.json"), dir.join("b.json"));
    let (code, _, _) =
        run(bin().args(["gen", "--kind", "graph", "--n", "7", "--seed", "4", "-o"]).arg(&a).arg("--out-b").arg(&b));
    assert_eq!(code, 0);
    for method in ["logdet", "cvxiter"] {
        let (code, out, _) = run(bin().arg("graphiso").arg(&a).arg(&b).args(["--method", method, "--json"]));
        assert_eq!(code, 0, "{method}");
        let f = fields(&out);
        assert!(num(&f, "norm_value") <= 1e-6);
        assert!(num(&f, "residual.orthogonality") <= 1e-6);
        assert_eq!(f["eps_rank"], "7");
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("a.report.json")).unwrap()).unwrap();
        assert_eq!(doc["status"], "isomorphic");
        assert_eq!(doc["x"].as_array().unwrap().len(), 7);
    }
}

#[test]
fn bench_of_noiseless_weighted_opp_reaches_full_rank_share() {
    let dir = scratch("bench");
    let file = dir.join("batch.json");
    std::fs::write(
        &file,
        r#"{"kind": "orthogonal", "m": 4, "n": 4, "p": 10, "q": 3, "noise": 0.0, "norm": "l1", "count": 10}"#,
    )
    .unwrap();
    let (code, out, _) = run(bin().arg("bench").arg(&file).arg("--json"));
    assert_eq!(code, 0);
    let f = fields(&out);
    assert_eq!(f["aggregate.runs"], "10");
    assert_eq!(f["aggregate.pct_eps_rank_le_target"], "100");
    let seeds: Vec<u64> = out
        .lines()
        .filter_map(|l| l.strip_prefix("run "))
        .map(|l| l.split(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(seeds, (0..10).collect::<Vec<_>>());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("batch.report.json")).unwrap()).unwrap();
    assert_eq!(doc["summary"]["runs"], 10);
}

#[test]
fn infeasible_and_unresolved_levels() {
    let dir = scratch("levels");
    let file = dir.join("ob.json");
    run(bin().args(["gen", "--kind", "oblique", "--noise", "0.5", "--seed", "2", "--norm", "l2", "-o"]).arg(&file));
    let (code, out, _) = run(bin().arg("solve").arg(&file).args(["--method", "relax"]));
    assert_eq!(code, 0);
    let bound = num(&fields(&out), "objective");

    let below = format!("{}", bound - 0.5);
    let (code, out, _) = run(bin().arg("solve").arg(&file).args(["--method", "logdet", "--gamma", &below]));
    assert_eq!(code, 1);
    assert_eq!(fields(&out)["status"], "infeasible");

    // a single trace solve at the relaxation bound does not reach rank 4
    let at = format!("{}", bound + 1e-4);
    let (code, out, _) = run(bin().arg("solve").arg(&file).args(["--method", "trace", "--gamma", &at]));
    assert_eq!(code, 2);
    assert_eq!(fields(&out)["status"], "unresolved");
}

#[test]
fn malformed_input_exits_three_with_a_location() {
    let dir = scratch("bad");
    let file = dir.join("bad.json");
    std::fs::write(&file, "{\n  \"map\": \"standard\",\n  \"A\": [[1, 2]\n").unwrap();
    let (code, _, err) = run(bin().arg("solve").arg(&file));
    assert_eq!(code, 3);
    assert!(err.contains("bad.json:4:"), "{err}");

    std::fs::write(&file, r#"{"map": "weighted", "A": [[1, 0]], "C": [[1]], "norm": "l1"}"#).unwrap();
    let (code, _, err) = run(bin().arg("solve").arg(&file));
    assert_eq!(code, 3);
    assert!(err.contains("field `B`"), "{err}");

    let (code, _, _) = run(bin().args(["solve", "--norm", "l7", "x.json"]));
    assert_eq!(code, 3);
}
