use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use lstoc_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = lstoc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    lstoc_string_free(s);
    out
}

#[test]
fn machine_round_trip() {
    unsafe {
        let mut fsm = ptr::null_mut();
        assert_eq!(lstoc_fsm_compile(c("a;(b|c);d").as_ptr(), &mut fsm), LstocStatus::Ok);
        assert!(lstoc_last_error().is_null());
        let mut yes = false;
        assert_eq!(lstoc_fsm_accepts(fsm, c("acd").as_ptr(), &mut yes), LstocStatus::Ok);
        assert!(yes);
        assert_eq!(lstoc_fsm_accepts(fsm, c("ad").as_ptr(), &mut yes), LstocStatus::Ok);
        assert!(!yes);
        assert_eq!(lstoc_fsm_satisfies(fsm, c("..a.b..d").as_ptr(), &mut yes), LstocStatus::Ok);
        assert!(yes);
        let mut dot = ptr::null_mut();
        assert_eq!(lstoc_fsm_dot(fsm, &mut dot), LstocStatus::Ok);
        assert!(take(dot).starts_with("digraph"));
        lstoc_fsm_free(fsm);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut fsm = ptr::null_mut();
        assert_eq!(lstoc_fsm_compile(c("a;;b").as_ptr(), &mut fsm), LstocStatus::Syntax);
        assert!(fsm.is_null());
        assert!(last_error().contains("syntax"));
        assert_eq!(lstoc_fsm_compile(ptr::null(), &mut fsm), LstocStatus::NullPointer);
        assert_eq!(lstoc_fsm_compile(c("a").as_ptr(), ptr::null_mut()), LstocStatus::NullPointer);
        let mut env = ptr::null_mut();
        assert_eq!(lstoc_env_load(c("no.such.env").as_ptr(), &mut env), LstocStatus::Io);
        // freeing null is a no-op
        lstoc_fsm_free(ptr::null_mut());
        lstoc_env_free(ptr::null_mut());
        lstoc_string_free(ptr::null_mut());
    }
}

#[test]
fn episode_through_the_abi() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(lstoc_env_load(c("letter.task1").as_ptr(), &mut env), LstocStatus::Ok);
        let (mut x, mut y, mut done, mut label) = (0, 0, false, 7);
        assert_eq!(lstoc_env_step(env, 0, &mut x, &mut y, &mut done, &mut label), LstocStatus::InvalidArgument);
        assert_eq!(lstoc_env_reset(env, 0, &mut x, &mut y), LstocStatus::Ok);
        assert_eq!(lstoc_env_step(env, 9, &mut x, &mut y, &mut done, &mut label), LstocStatus::InvalidArgument);
        let mut steps = 0;
        while !done {
            assert_eq!(lstoc_env_step(env, 2, &mut x, &mut y, &mut done, &mut label), LstocStatus::Ok);
            steps += 1;
            assert!(done || label == -1);
        }
        assert!(steps > 0);
        assert_eq!(label, 0);
        assert_eq!(lstoc_env_step(env, 2, &mut x, &mut y, &mut done, &mut label), LstocStatus::EpisodeDone);
        lstoc_env_free(env);
    }
}

#[test]
fn labeling_verdict_as_json() {
    // four one-byte keys: c, b, w, d
    let seqs = r#"[["00","01","03"],["00","02","03"]]"#;
    let keys = r#"["00","01","02","03"]"#;
    unsafe {
        let mut out = ptr::null_mut();
        let st = lstoc_label_solve(c("c;(b|w);d").as_ptr(), c(seqs).as_ptr(), c(keys).as_ptr(), &mut out);
        assert_eq!(st, LstocStatus::Ok, "{}", last_error());
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["verdict"], "ambiguous");
        assert_eq!(v["enumerated_count"], 2);
        let st = lstoc_label_solve(c("c;(b|w);d").as_ptr(), c("[").as_ptr(), c(keys).as_ptr(), &mut out);
        assert_eq!(st, LstocStatus::InvalidArgument);
    }
}

#[test]
fn zero_budget_run() {
    unsafe {
        let mut out = ptr::null_mut();
        let st = lstoc_run(c(r#"{"env":"letter.task1","max_steps":0}"#).as_ptr(), &mut out);
        assert_eq!(st, LstocStatus::Ok, "{}", last_error());
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["verdict"], "budget_exhausted");
    }
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lstoc.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "lstoc_last_error",
        "lstoc_string_free",
        "lstoc_fsm_compile",
        "lstoc_fsm_free",
        "lstoc_fsm_accepts",
        "lstoc_fsm_satisfies",
        "lstoc_fsm_dot",
        "lstoc_env_load",
        "lstoc_env_free",
        "lstoc_env_reset",
        "lstoc_env_step",
        "lstoc_label_solve",
        "lstoc_run",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    // a C compiler is optional in the build environment
    if let Ok(s) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).status() {
        assert!(s.success());
    }
}
