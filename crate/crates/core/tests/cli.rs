use std::path::{Path, PathBuf};
use std::process::Command;

use indiff::kv::KvFile;

fn indiff(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_indiff")).args(args).output().unwrap();
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulated(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.kv");
    std::fs::write(
        &spec,
        "true_model = M_+\nn_subjects = 20\ntrials_per_cell = 100\nmu = 900\nsigma = 100\n\
         nu = 90\neta = 30\nscale = normal\nseed = 91\n",
    )
    .unwrap();
    let out = dir.join("sim");
    assert_eq!(indiff(&["simulate", "--spec", p(&spec), "--outdir", p(&out)]), 0);
    for f in ["trials.csv", "truth.csv", "spec.kv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    out.join("trials.csv")
}

fn compare(input: &Path, outdir: &Path, scale: &str) -> KvFile {
    let code = indiff(&[
        "compare", "--input", p(input), "--baseline", "baseline", "--outdir", p(outdir), "--scale", scale,
        "--chains", "2", "--iters", "3000", "--burnin", "500", "--mc-draws", "20000", "--prior-draws", "200000",
    ]);
    assert_eq!(code, 0);
    KvFile::read(outdir.join("bf_report.kv")).unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn compare_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated(dir.path());

    let a = dir.path().join("a");
    let report = compare(&input, &a, "normal");
    assert!(report.get_real("bf_plus_u").unwrap().unwrap() > 1.0);
    assert_eq!(report.get("winner"), Some("M_+"));
    assert!(!a.join("back_transform.kv").exists());

    let b = dir.path().join("b");
    compare(&input, &b, "normal");
    assert_eq!(files(&a), files(&b));
    for f in files(&a) {
        if f != "provenance.kv" {
            assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
        }
    }

    let r = dir.path().join("r");
    let code = indiff(&[
        "report", "--input", p(&input), "--baseline", "baseline", "--draws", p(&a.join("draws.csv")), "--outdir", p(&r),
    ]);
    assert_eq!(code, 0);
    for f in ["effects.csv", "effects.kv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(r.join(f)).unwrap(), "{f}");
    }

    let l = dir.path().join("l");
    let report = compare(&input, &l, "shifted-lognormal");
    assert_eq!(report.get("winner"), Some("M_+"));
    assert!(l.join("back_transform.kv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let write = |name: &str, text: &str| {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    };
    let fit = |input: &Path| {
        indiff(&["fit", "--input", p(input), "--baseline", "a", "--outdir", p(&out), "--iters", "400", "--burnin", "100"])
    };

    let missing_column = write("m.csv", "subject,cond,rt\ns1,a,500\ns1,b,520\n");
    assert_eq!(fit(&missing_column), 2);
    let bad_rt = write("r.csv", "subject,condition,rt\ns1,a,500\ns1,b,-3\n");
    assert_eq!(fit(&bad_rt), 2);
    let empty_cell = write("e.csv", "subject,condition,rt\ns1,a,500\ns1,b,520\ns1,a,530\ns2,a,610\ns2,a,640\n");
    assert_eq!(fit(&empty_cell), 3);

    let fast = write("f.csv", "subject,condition,rt\ns1,a,500\ns1,b,180\n");
    let code = indiff(&["transform", "--input", p(&fast), "--baseline", "a", "--outdir", p(&out), "--shift", "200"]);
    assert_eq!(code, 2);
    assert_eq!(indiff(&["fit", "--bogus"]), 1);
    assert_eq!(indiff(&["--help"]), 0);
}
