use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use cogplan_ffi::*;

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let owned = CStr::from_ptr(s).to_str().unwrap().to_owned();
    cogplan_string_free(s);
    owned
}

fn last_error() -> String {
    let p = cogplan_last_error();
    assert!(!p.is_null(), "no error recorded");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scripted_planner(script: &str) -> *mut CogplanPlanner {
    let config = format!(
        "[planner]\nparadigm = \"sequential\"\n[expert]\nscript = \"experts/{script}\"\n[search]\ncorpus = \".\"\n"
    );
    let (config, base) = (c(&config), c(demo().to_str().unwrap()));
    let mut planner = ptr::null_mut();
    let status = unsafe { cogplan_planner_new(config.as_ptr(), base.as_ptr(), &mut planner) };
    assert_eq!(status, CogplanStatus::Ok, "{}", last_error());
    planner
}

#[test]
fn planner_runs_the_screenshot_chain() {
    let planner = scripted_planner("wukong.json");
    let image = demo().join("assets/astro_bot_screenshot.png");
    let query = serde_json::json!({
        "id": "wukong",
        "text": "How many copies has the game in this screenshot sold compared with Black Myth: Wukong?",
        "image": image,
    });
    let query = c(&query.to_string());
    let mut out = ptr::null_mut();
    let status = unsafe { cogplan_planner_run(planner, query.as_ptr(), &mut out) };
    assert_eq!(status, CogplanStatus::Ok);
    let trace: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    let actions: Vec<_> = trace["steps"].as_array().unwrap().iter().map(|s| s["action"].clone()).collect();
    assert_eq!(actions, ["IMAGE_SEARCH", "TEXT_SEARCH", "NO_SEARCH"]);
    assert_eq!(trace["terminated_by"], "no-search");
    unsafe { cogplan_planner_free(planner) };
}

#[test]
fn planner_rejects_bad_input() {
    let planner = scripted_planner("wukong.json");
    let mut out = ptr::null_mut();
    let garbage = c("{not json");
    assert_eq!(unsafe { cogplan_planner_run(planner, garbage.as_ptr(), &mut out) }, CogplanStatus::Parse);
    assert!(out.is_null());
    let empty = c(r#"{"id": "x", "text": "   "}"#);
    assert_eq!(unsafe { cogplan_planner_run(planner, empty.as_ptr(), &mut out) }, CogplanStatus::Validation);
    assert_eq!(unsafe { cogplan_planner_run(planner, ptr::null(), &mut out) }, CogplanStatus::InvalidArgument);
    assert!(last_error().contains("query_json"));
    unsafe { cogplan_planner_free(planner) };

    let mut handle = ptr::null_mut();
    let bad = c("[planner]\nt_max = 0\n");
    assert_eq!(unsafe { cogplan_planner_new(bad.as_ptr(), ptr::null(), &mut handle) }, CogplanStatus::Validation);
    let unparsable = c("[planner\n");
    assert_eq!(unsafe { cogplan_planner_new(unparsable.as_ptr(), ptr::null(), &mut handle) }, CogplanStatus::Parse);
    assert!(handle.is_null());
    unsafe { cogplan_planner_free(ptr::null_mut()) };
}

#[test]
fn unconfigured_expert_is_a_validation_error() {
    let mut planner = ptr::null_mut();
    assert_eq!(unsafe { cogplan_planner_new(ptr::null(), ptr::null(), &mut planner) }, CogplanStatus::Ok);
    let query = c(r#"{"id": "x", "text": "what is this"}"#);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cogplan_planner_run(planner, query.as_ptr(), &mut out) }, CogplanStatus::Validation);
    assert!(last_error().contains("no expert configured"));
    unsafe { cogplan_planner_free(planner) };
}

#[test]
fn metrics_match_the_library() {
    let (pred, gold) = (c("the cat sat on mat"), c("the cat ran"));
    let mut v = f64::NAN;
    assert_eq!(unsafe { cogplan_token_f1(pred.as_ptr(), gold.as_ptr(), &mut v) }, CogplanStatus::Ok);
    assert_eq!(v, 0.5);
    let (a, b) = (c("a b c d"), c("a c d"));
    assert_eq!(unsafe { cogplan_rouge_l(a.as_ptr(), b.as_ptr(), &mut v) }, CogplanStatus::Ok);
    assert!((v - 6.0 / 7.0).abs() < 1e-12);
    let refs = [c("the cat is on the mat"), c("there is a cat on the mat")];
    let ptrs: Vec<*const c_char> = refs.iter().map(|r| r.as_ptr()).collect();
    let pred = c("the cat is on the mat");
    assert_eq!(unsafe { cogplan_bleu(pred.as_ptr(), ptrs.as_ptr(), ptrs.len(), &mut v) }, CogplanStatus::Ok);
    assert!((v - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { cogplan_bleu(pred.as_ptr(), ptr::null(), 2, &mut v) }, CogplanStatus::InvalidArgument);
    assert_eq!(unsafe { cogplan_token_f1(pred.as_ptr(), gold.as_ptr(), ptr::null_mut()) }, CogplanStatus::InvalidArgument);
}

#[test]
fn dataset_stats_and_evaluation() {
    let path = c(demo().join("dataset.jsonl").to_str().unwrap());
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { cogplan_dataset_load(path.as_ptr(), &mut ds) }, CogplanStatus::Ok);
    assert_eq!(unsafe { cogplan_dataset_len(ds) }, 21);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cogplan_dataset_stats_json(ds, &mut out) }, CogplanStatus::Ok);
    let stats: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(stats["n_queries"], 21);

    let traces = serde_json::json!({
        "sample_id": "s01", "steps": [], "final_answer": "whatever", "terminated_by": "no-search"
    });
    let traces = c(&traces.to_string());
    let label = c("ffi");
    assert_eq!(unsafe { cogplan_evaluate(ds, traces.as_ptr(), label.as_ptr(), &mut out) }, CogplanStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(report["label"], "ffi");
    assert_eq!(report["overall"]["n"], 1);

    let unknown = c(r#"{"sample_id": "nope", "steps": [], "final_answer": "a", "terminated_by": "no-search"}"#);
    assert_eq!(unsafe { cogplan_evaluate(ds, unknown.as_ptr(), ptr::null(), &mut out) }, CogplanStatus::Validation);
    assert!(last_error().contains("nope"));
    unsafe { cogplan_dataset_free(ds) };

    let missing = c("/nonexistent/dataset.jsonl");
    assert_eq!(unsafe { cogplan_dataset_load(missing.as_ptr(), &mut ds) }, CogplanStatus::Io);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": 3}\n").unwrap();
    let bad = c(bad.to_str().unwrap());
    assert_eq!(unsafe { cogplan_dataset_load(bad.as_ptr(), &mut ds) }, CogplanStatus::Parse);
    assert!(last_error().contains("line 1"));
    assert_eq!(unsafe { cogplan_dataset_len(ptr::null()) }, 0);
}

#[test]
fn success_clears_the_last_error() {
    let mut v = 0.0;
    assert_eq!(unsafe { cogplan_token_f1(ptr::null(), ptr::null(), &mut v) }, CogplanStatus::InvalidArgument);
    assert!(!cogplan_last_error().is_null());
    let a = c("x");
    assert_eq!(unsafe { cogplan_token_f1(a.as_ptr(), a.as_ptr(), &mut v) }, CogplanStatus::Ok);
    assert!(cogplan_last_error().is_null());
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "cogplan.h"

int main(void) {
    double f1 = 0.0;
    if (cogplan_token_f1("the cat sat on mat", "the cat ran", &f1) != COGPLAN_STATUS_OK) return 1;
    if (f1 != 0.5) return 2;
    if (cogplan_rouge_l(NULL, "x", &f1) != COGPLAN_STATUS_INVALID_ARGUMENT) return 3;
    if (cogplan_last_error() == NULL) return 4;
    CogplanDataset *ds = NULL;
    if (cogplan_dataset_load(DATASET, &ds) != COGPLAN_STATUS_OK) return 5;
    char *json = NULL;
    if (cogplan_dataset_stats_json(ds, &json) != COGPLAN_STATUS_OK) return 6;
    printf("%zu %s\n", cogplan_dataset_len(ds), json);
    cogplan_string_free(json);
    cogplan_dataset_free(ds);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let dataset = format!("-DDATASET=\"{}\"", demo().join("dataset.jsonl").display());
    let syntax = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", &dataset, "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .expect("a C compiler");
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));

    // the static library sits next to the deps directory holding this test binary
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libcogplan_ffi.a");
    if !lib.exists() {
        eprintln!("skipping link step: {} not built", lib.display());
        return;
    }
    let exe = dir.path().join("smoke");
    let build = Command::new("cc")
        .args(["-std=c99", &dataset, "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("21 {"));
}
