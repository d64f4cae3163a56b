mod common;

use turaco::data::Config;
use turaco::experiment::load_program;
use turaco::interp::run_flat;
use turaco::paths::collect_traces;
use turaco::rng::stream_rng;
use turaco::syntax::{desugar, parse, pretty_print};

use common::all_programs;

#[test]
fn surface_round_trips_through_printer() {
    for file in all_programs() {
        let src = std::fs::read_to_string(&file).unwrap();
        let p = parse(&src).unwrap();
        let again = parse(&pretty_print(&p)).unwrap_or_else(|e| panic!("{}: {e}", file.display()));
        assert_eq!(p, again, "{}", file.display());
    }
}

#[test]
fn core_round_trips_through_printer() {
    for file in all_programs() {
        let core = load_program(&file).unwrap();
        assert!(core.is_core());
        let again = parse(&pretty_print(&core)).unwrap();
        assert_eq!(core, again, "{}", file.display());
        // desugaring is idempotent
        assert_eq!(desugar(&core).unwrap(), core);
    }
}

#[test]
fn desugaring_preserves_meaning() {
    for file in all_programs() {
        let src = std::fs::read_to_string(&file).unwrap();
        let surface = parse(&src).unwrap();
        let core = desugar(&surface).unwrap();
        let spec = Config::load(&file.with_extension("json")).unwrap().spec_for(&core).unwrap();
        let mut rng = stream_rng(3, "desugar", 0);
        for _ in 0..1000 {
            let x = spec.sample(&mut rng);
            let (ys, ps) = run_flat(&surface, &x).unwrap();
            let (yc, pc) = run_flat(&core, &x).unwrap();
            assert_eq!(ps, pc, "{} at {x:?}", file.display());
            for (a, b) in ys.iter().zip(&yc) {
                // x/c and x*(1/c) may differ in the last place
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{}: {a} vs {b}", file.display());
            }
        }
    }
}

#[test]
fn syntactic_paths() {
    let want: [&[&str]; 8] = [
        &["ll", "lr", "rl", "rr"],
        &["ll", "lr", "r"],
        &["l", "r"],
        &["ll", "lrl", "lrr", "rl", "rrl", "rrr"],
        &["l", "r"],
        &["l", "r"],
        &["l", "rl", "rrl", "rrr"],
        &["l", "r"],
    ];
    for (file, ids) in all_programs().iter().zip(want) {
        let traces = collect_traces(&load_program(file).unwrap()).unwrap();
        let got: Vec<&str> = traces.keys().map(|k| k.as_str()).collect();
        assert_eq!(got, ids, "{}", file.display());
    }
}
