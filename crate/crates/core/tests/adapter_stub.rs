mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use common::{all_dead, analyzer, profile, read_pids, script};
use latune::adapter::{ExtractionMode, ExtractionRule, NormStep};
use latune::analysis::{AlarmId, AlarmSet, Analyzer, FailureReason, OutcomeStatus};
use latune::config::{preset, AnalyzerSpec};
use latune::lattice::Setting;

#[test]
fn sleeping_stub_times_out_and_dies() {
    let dir = tempfile::tempdir().unwrap();
    let pidfile = dir.path().join("pids");
    let cmd = script(
        dir.path(),
        "sleepy.sh",
        &format!(
            "sleep 30 &\necho $! >> {0}\necho $$ >> {0}\nsleep 30",
            pidfile.display()
        ),
    );
    let a = analyzer(profile(&cmd, ExtractionRule::regex_lines("(.*)")), vec![]);
    let deadline = 0.3;
    let start = Instant::now();
    let o = a.analyze(&Setting::ints(&[1]), deadline);
    let took = start.elapsed().as_secs_f64();
    assert_eq!(
        o.status,
        OutcomeStatus::Failed {
            reason: FailureReason::Timeout
        }
    );
    assert!(took <= deadline + a.profile().timeout_grace_seconds, "took {took}");
    assert!(o.wall_time >= deadline);
    let pids = read_pids(&pidfile);
    assert_eq!(pids.len(), 2);
    assert!(all_dead(&pids));
}

#[test]
fn fixture_transcript_yields_expected_alarms() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eva_transcript.txt");
    let dir = tempfile::tempdir().unwrap();
    // Alarms on stderr too, as some analyzers interleave them.
    let cmd = script(
        dir.path(),
        "eva.sh",
        &format!(
            "cat {}\necho '[eva:alarm] other.c:3: Warning: division by zero. assert d ≢ 0;' >&2",
            fixture.display()
        ),
    );
    let cfg = preset("framac-eva").unwrap();
    let AnalyzerSpec::External(eva) = cfg.analyzer else {
        unreachable!()
    };
    let a = analyzer(profile(&cmd, eva.extraction), vec![]);
    let o = a.analyze(&Setting::ints(&[0]), 10.0);
    let want: AlarmSet = [
        "main.c: Warning: signed overflow. assert sum + tab[i] ≤ 2147483647;",
        "main.c: Warning: out of bounds read. assert index < 5;",
        "other.c: Warning: division by zero. assert d ≢ 0;",
    ]
    .into_iter()
    .map(AlarmId::from)
    .collect();
    assert_eq!(o.alarms(), Some(&want));
}

#[test]
fn two_assertion_lines_give_two_alarms() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(
        dir.path(),
        "two.sh",
        "echo 'noise'\necho 'ALARM f.c:3: assert x < 5;'\necho 'ALARM f.c:9: assert y != 0;'\necho 'ALARM f.c:10: assert x < 5;'",
    );
    let a = analyzer(profile(&cmd, ExtractionRule::regex_lines(r"^ALARM (.*)$")), vec![]);
    let o = a.analyze(&Setting::ints(&[2]), 10.0);
    assert_eq!(o.alarms().map(|s| s.len()), Some(2));
}

#[test]
fn arguments_reach_the_process() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "args.sh", "for a in \"$@\"; do echo \"ARG $a\"; done");
    let a = analyzer(
        profile(&cmd, ExtractionRule::regex_lines(r"^ARG (.*)$")),
        vec!["x.c".into(), "y.c".into()],
    );
    let o = a.analyze(&Setting::ints(&[7]), 10.0);
    let got: Vec<&str> = o.alarms().unwrap().iter().map(|a| a.as_str()).collect();
    assert_eq!(got, ["-n", "7", "x.c", "y.c"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "fail.sh", "echo 'ALARM a'\nexit 3");
    let mut ap = profile(&cmd, ExtractionRule::regex_lines(r"^ALARM (.*)$"));
    let a = analyzer(ap.clone(), vec![]);
    let o = a.analyze(&Setting::ints(&[0]), 10.0);
    assert_eq!(
        o.status,
        OutcomeStatus::Failed {
            reason: FailureReason::Crash
        }
    );
    ap.accepted_exit_codes = vec![0, 3];
    let a = analyzer(ap, vec![]);
    assert_eq!(a.analyze(&Setting::ints(&[0]), 10.0).alarms().map(|s| s.len()), Some(1));
}

#[test]
fn unparseable_output_and_missing_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "junk.sh", "echo 'not json'");
    let rule = ExtractionRule {
        mode: ExtractionMode::JsonPointer {
            pointer: "/alarms".into(),
            item_fields: vec![],
        },
        normalization: vec![NormStep::StripWhitespace],
    };
    let a = analyzer(profile(&cmd, rule), vec![]);
    assert_eq!(
        a.analyze(&Setting::ints(&[0]), 10.0).status,
        OutcomeStatus::Failed {
            reason: FailureReason::ParseError
        }
    );
    let a = analyzer(
        profile(&dir.path().join("absent"), ExtractionRule::regex_lines("(.*)")),
        vec![],
    );
    assert_eq!(
        a.analyze(&Setting::ints(&[0]), 10.0).status,
        OutcomeStatus::Failed {
            reason: FailureReason::Crash
        }
    );
}

#[test]
fn infinity_is_not_launched() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "ok.sh", "true");
    let a = analyzer(profile(&cmd, ExtractionRule::regex_lines("(.*)")), vec![]);
    let inf = Setting::new(vec![latune::ParamValue::INFINITY]);
    assert!(!a.analyze(&inf, 10.0).is_completed());
    assert!(Analyzer::render(&a, &inf).is_none());
}

#[test]
fn background_children_do_not_outlive_a_normal_exit() {
    let dir = tempfile::tempdir().unwrap();
    let pidfile = dir.path().join("pids");
    let cmd = script(
        dir.path(),
        "leaky.sh",
        &format!("sleep 30 &\necho $! >> {}\necho 'ALARM z'", pidfile.display()),
    );
    let a = analyzer(profile(&cmd, ExtractionRule::regex_lines(r"^ALARM (.*)$")), vec![]);
    assert!(a.analyze(&Setting::ints(&[0]), 10.0).is_completed());
    assert!(all_dead(&read_pids(&pidfile)));
}

#[test]
fn twenty_concurrent_timeouts_leave_no_orphans() {
    let dir = tempfile::tempdir().unwrap();
    let piddir = dir.path().join("pids");
    fs::create_dir(&piddir).unwrap();
    let cmd = script(
        dir.path(),
        "hang.sh",
        &format!(
            "sleep 30 &\nchild=$!\nsh -c 'sleep 30' &\necho \"$$ $child $!\" > {}/$$\nwait",
            piddir.display()
        ),
    );
    let a = analyzer(profile(&cmd, ExtractionRule::regex_lines("(.*)")), vec![]);
    let start = Instant::now();
    let outcomes: Vec<_> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..20)
            .map(|i| {
                let a = &a;
                s.spawn(move || a.analyze(&Setting::ints(&[i]), 0.5))
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(start.elapsed().as_secs_f64() < 0.5 + a.profile().timeout_grace_seconds + 1.0);
    assert!(outcomes.iter().all(|o| o.status
        == OutcomeStatus::Failed {
            reason: FailureReason::Timeout
        }));
    let pids: Vec<u32> = fs::read_dir(&piddir)
        .unwrap()
        .flat_map(|e| read_pids(&e.unwrap().path()))
        .collect();
    assert_eq!(pids.len(), 60);
    assert!(all_dead(&pids));
}
