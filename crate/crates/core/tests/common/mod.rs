#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use latune::adapter::{AnalyzerProfile, ArgStyle, ExternalAnalyzer, ExtractionRule, ProgramRef, RenderRule};
use latune::lattice::{ParamSpec, Profile};

pub fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
    fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
    p
}

pub fn params() -> Profile {
    Profile::new(vec![ParamSpec::integer("n")]).unwrap()
}

pub fn profile(cmd: &Path, extraction: ExtractionRule) -> AnalyzerProfile {
    let mut renderings = BTreeMap::new();
    renderings.insert(
        "n".to_string(),
        RenderRule::Value {
            flag: "-n".into(),
            style: ArgStyle::Separate,
        },
    );
    AnalyzerProfile {
        command: vec![
            cmd.to_string_lossy().into_owned(),
            "{params}".into(),
            "{program}".into(),
        ],
        renderings,
        workdir: None,
        env: BTreeMap::new(),
        extraction,
        timeout_grace_seconds: 1.0,
        accepted_exit_codes: vec![0],
    }
}

pub fn analyzer(ap: AnalyzerProfile, sources: Vec<String>) -> ExternalAnalyzer {
    ExternalAnalyzer::new(
        ap,
        params(),
        ProgramRef {
            id: "stub".into(),
            sources,
        },
    )
    .unwrap()
}

/// Running and not a zombie.
pub fn alive(pid: u32) -> bool {
    match fs::read_to_string(format!("/proc/{pid}/stat")) {
        Ok(stat) => {
            let state = stat.rsplit(") ").next().and_then(|r| r.chars().next());
            state != Some('Z') && state != Some('X')
        }
        Err(_) => false,
    }
}

pub fn all_dead(pids: &[u32]) -> bool {
    let until = Instant::now() + Duration::from_secs(3);
    loop {
        if pids.iter().all(|p| !alive(*p)) {
            return true;
        }
        if Instant::now() > until {
            return false;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

pub fn read_pids(path: &Path) -> Vec<u32> {
    fs::read_to_string(path)
        .unwrap_or_default()
        .split_whitespace()
        .map(|s| s.parse().unwrap())
        .collect()
}
