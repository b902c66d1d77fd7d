//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use devdiag_core::canonical::{
    apply_transition, intensity_report, ArcCounters, ArcKey, CanonicalDiagram, IntensityError, ObjectDistribution,
    TimedArc, TransitionError, TransitionEvent,
};
use devdiag_core::composition::{
    check_consistency, compose_parallel, compose_sequential, enumerate_attainable_sequences, synthetic_diagram_set,
    synthetic_prescriptions, CompositionError, SyntheticShape, TimedDiagramSet,
};
use devdiag_core::dynamics::{classify_series, Extremum, Monotone, ParameterSeries};
use devdiag_core::model::{parse_model, Model};
use devdiag_core::scenario::{
    analyze_trajectory, deliveries_at, events_to_csv, run_scenario, step, synthetic_scenario, validate_scenario,
    ArcRef, Cause, Configuration, Event, EventKind, ParentLink, Scenario, SymbolClass, Threshold,
};
use devdiag_core::statespace::{
    classify_hierarchical, evaluate_scale, validate_scale_disjointness, MatchMode, Predicate, SampleSpec, Scale,
    Schema, StatespaceError,
};

const BIN: &str = env!("CARGO_BIN_EXE_devdiag");

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn two_level() -> Model {
    parse_model(&fixtures_dir().join("two_level.json")).expect("fixture parses")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: &[String], summary: String) -> Outcome {
    if failures.is_empty() {
        Outcome { pass: true, detail: summary }
    } else {
        let shown: Vec<&str> = failures.iter().take(3).map(String::as_str).collect();
        Outcome {
            pass: false,
            detail: format!("{} failure(s): {}", failures.len(), shown.join("; ")),
        }
    }
}

fn criterion_1() -> Outcome {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("events.csv");
    let fixture = fixtures_dir().join("two_level.json");
    let mut outputs = Vec::new();
    for _ in 0..5 {
        let out = Command::new(BIN)
            .args(["simulate", fixture.to_str().unwrap(), "--scenario", "baseline", "--events"])
            .arg(&csv_path)
            .output()
            .unwrap();
        if !out.status.success() {
            failures.push(format!("simulate exited {:?}", out.status.code()));
        }
        outputs.push((out.stdout, std::fs::read(&csv_path).unwrap_or_default()));
    }
    if outputs.windows(2).any(|w| w[0] != w[1]) {
        failures.push("runs differ".into());
    }

    let model = two_level();
    let mut runs = 0;
    for sm in model.scenarios.values() {
        let sc = &sm.scenario;
        let h = sc.horizon.unwrap();
        let tr = run_scenario(sc, h).unwrap();
        let mut config = Configuration::initial(sc);
        let mut events = Vec::new();
        for tick in 0..h {
            let (next, mut ev) = step(&config, &deliveries_at(sc, tick), sc, tick, events.len() as u64).unwrap();
            if next != tr.configurations[tick as usize] {
                failures.push(format!("{}: fold differs at tick {tick}", sc.id));
            }
            events.append(&mut ev);
            config = next;
        }
        if events != tr.events {
            failures.push(format!("{}: folded event log differs", sc.id));
        }
        runs += 1;
    }
    outcome(
        &failures,
        format!("5 CLI runs byte-identical, step fold matches run_scenario on {runs} fixture scenarios"),
    )
}

fn criterion_2() -> Outcome {
    let mut failures = Vec::new();
    let mut d = CanonicalDiagram::chain("flow", 5, 1, 200);
    d.dev_arcs.push(TimedArc::new("S1", "S3", 2));
    d.back_arcs.push(TimedArc::new("S3", "S1", 2));
    d.back_arcs.push(TimedArc::new("S4", "S2", 1));
    d.back_arcs.push(TimedArc::new("S5", "S4", 1));
    let initial = ObjectDistribution::from_counts([("S1", 60), ("S2", 40)]);
    let objects: Vec<String> = (1..=100).map(|i| format!("o{i}")).collect();

    let mut dist = initial.clone();
    let mut counters = ArcCounters::new();
    let mut history = Vec::new();
    let mut tick = 0;
    while history.len() < 1000 {
        tick += 1;
        for (k, o) in objects.iter().enumerate() {
            if history.len() == 1000 || !(tick + k as u64).is_multiple_of(3) {
                continue;
            }
            let here = dist.get(o).unwrap().clone();
            let legal: Vec<ArcKey> = d
                .arcs()
                .filter(|(_, a)| a.from == here.state && here.since + a.delay <= tick)
                .map(|(kind, a)| CanonicalDiagram::key_of(kind, a))
                .collect();
            if legal.is_empty() {
                continue;
            }
            let key = legal[(tick as usize * 7 + k) % legal.len()].clone();
            apply_transition(&mut dist, &mut counters, &d, o, &key, tick).unwrap();
            history.push(TransitionEvent { tick, object: o.clone(), arc: key });
        }
    }
    let report = intensity_report(&d, &initial, &history, 0, tick, None).unwrap();
    for t in 0..=(tick - report.start) as usize {
        let total: usize = report.occupancy.iter().map(|s| s.counts[t]).sum();
        if total != 100 {
            failures.push(format!("tick {t}: {total} objects"));
        }
    }
    let eta: u64 = report.arcs.iter().map(|a| *a.cumulative.last().unwrap()).sum();
    if eta != 1000 || report.development + report.degradation != 1000 {
        failures.push(format!("eta total {eta}"));
    }
    if counters.counts.values().sum::<u64>() != 1000 {
        failures.push("live counters disagree".into());
    }

    let o = "o1";
    let here = dist.get(o).unwrap().clone();
    let wrong_source = d
        .dev_arcs
        .iter()
        .find(|a| a.from != here.state)
        .map(|a| ArcKey::dev(&a.from, &a.to))
        .unwrap();
    let before = (dist.clone(), counters.clone());
    match apply_transition(&mut dist, &mut counters, &d, o, &wrong_source, tick + 5) {
        Err(TransitionError::ObjectNotInFromState { .. }) => {}
        other => failures.push(format!("wrong source gave {other:?}")),
    }
    let mut early = ObjectDistribution::new();
    early.place("x", "S1", 10);
    match apply_transition(&mut early, &mut counters, &d, "x", &ArcKey::dev("S1", "S3"), 11) {
        Err(TransitionError::TooEarly { earliest: 12, .. }) => {}
        other => failures.push(format!("early firing gave {other:?}")),
    }
    if (dist.clone(), counters.clone()) != before {
        failures.push("rejected transition modified state".into());
    }
    let mut bad = history.clone();
    bad.push(TransitionEvent {
        tick: tick + 1,
        object: "o2".into(),
        arc: ArcKey::dev("S9", "S1"),
    });
    if !matches!(
        intensity_report(&d, &initial, &bad, 0, tick + 1, None),
        Err(IntensityError::IllegalEvent { index: 1000, .. })
    ) {
        failures.push("replay accepted an illegal event".into());
    }
    outcome(
        &failures,
        format!("100 objects conserved over {} ticks, eta = 1000, illegal transitions rejected", tick + 1),
    )
}

fn consistency_corpus() -> Vec<(TimedDiagramSet, devdiag_core::composition::PrescribedSequence, u64)> {
    (0..200u64)
        .map(|seed| {
            let horizon = 1 + seed % 6;
            let shape = SyntheticShape {
                max_diagrams: 2,
                max_states: 5,
                max_arcs: 8,
                max_delay: 3,
                horizon,
            };
            let set = synthetic_diagram_set(seed, shape);
            let seq = synthetic_prescriptions(&set, seed.wrapping_mul(31), 4, horizon);
            (set, seq, horizon)
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut failures = Vec::new();
    let mut consistent = 0;
    for (i, (set, seq, horizon)) in consistency_corpus().into_iter().enumerate() {
        let fast = check_consistency(&set, &seq).unwrap().is_consistent();
        let space = enumerate_attainable_sequences(&set, horizon, 2_000_000).unwrap();
        let truth = space.satisfies(&seq).unwrap();
        if fast != truth {
            failures.push(format!("case {i}: search {fast}, oracle {truth}"));
        }
        consistent += usize::from(truth);
    }
    outcome(
        &failures,
        format!("200/200 verdicts agree with the exhaustive oracle ({consistent} consistent, {} inconsistent)", 200 - consistent),
    )
}

fn criterion_4() -> Outcome {
    let mut failures = Vec::new();
    let mut relaxations = 0;
    for (i, (set, seq, horizon)) in consistency_corpus().into_iter().enumerate() {
        if !check_consistency(&set, &seq).unwrap().is_consistent() {
            continue;
        }
        for k in 0..seq.len() {
            let upper = seq.steps().get(k + 1).map_or(horizon, |n| n.deadline);
            for d in seq.steps()[k].deadline + 1..=upper {
                let relaxed = seq.with_deadline(k, d).unwrap();
                relaxations += 1;
                if !check_consistency(&set, &relaxed).unwrap().is_consistent() {
                    failures.push(format!("case {i}: deadline {k} -> {d} flips"));
                }
            }
        }
    }
    outcome(&failures, format!("0 flips over {relaxations} single-deadline relaxations"))
}

fn region_of<'a>(model: &'a Model, scale: &str) -> Vec<&'a Predicate> {
    let mut out = Vec::new();
    for c in model.classificators.values() {
        for r in c.refinements().filter(|r| r.child == scale) {
            out.push(&model.scales[&r.scale].predicates()[r.predicate - 1]);
        }
    }
    out
}

fn criterion_5() -> Outcome {
    let mut failures = Vec::new();
    let mut fixtures = 0;
    let mut checked = 0usize;
    let mut paths = 0usize;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(fixtures_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    for path in entries {
        let model = parse_model(&path).unwrap();
        fixtures += 1;
        let spec = |params: &BTreeSet<String>, seed: u64| {
            let mut s = SampleSpec::random(10_000, seed);
            for p in params {
                s.ranges.insert(p.clone(), model.ranges[p]);
            }
            s
        };
        for scale in model.scales.values() {
            let region = region_of(&model, &scale.id);
            let mut params = scale.parameters();
            region.iter().for_each(|r| params.extend(r.parameters().iter().cloned()));
            for point in spec(&params, 11).points(&params).unwrap() {
                let inside = region.is_empty() || region.iter().any(|r| r.eval(&point).unwrap());
                if !inside {
                    continue;
                }
                checked += 1;
                let hits = scale.matching(&point).unwrap();
                if hits.len() != 1 {
                    failures.push(format!("{}: {} states at {point:?}", scale.id, hits.len()));
                }
            }
        }
        for c in model.classificators.values() {
            let params: BTreeSet<String> = c.scales().flat_map(|s| s.parameters()).collect();
            for point in spec(&params, 12).points(&params).unwrap() {
                let path = match classify_hierarchical(c, &point, MatchMode::Strict) {
                    Ok(p) => p,
                    Err(e) => {
                        failures.push(format!("{}: {e}", c.id));
                        continue;
                    }
                };
                paths += 1;
                if path[0].scale != c.root().id {
                    failures.push(format!("{}: path starts at {}", c.id, path[0].scale));
                }
                for (i, st) in path.iter().enumerate() {
                    let scale = c.scale(&st.scale).unwrap();
                    if !scale.predicates()[st.predicate - 1].eval(&point).unwrap() {
                        failures.push(format!("{}: step {i} predicate false", c.id));
                    }
                    let next = c.refinement(&st.scale, st.predicate).map(|s| s.id.clone());
                    if next != path.get(i + 1).map(|n| n.scale.clone()) {
                        failures.push(format!("{}: step {i} leaves the refinement tree", c.id));
                    }
                }
            }
        }
    }

    let schema = Schema::new().with_numeric("x");
    let overlapping = Scale::from_formulas("overlap", &[("low", "x < 6"), ("high", "x >= 4")], &schema).unwrap();
    let spec = SampleSpec::random(10_000, 5).with_range("x", 0.0, 10.0);
    let mut overlaps = 0;
    for point in spec.points(&overlapping.parameters()).unwrap() {
        let x = point["x"];
        let both = (4.0..6.0).contains(&x);
        match evaluate_scale(&overlapping, &point, MatchMode::Strict) {
            Err(StatespaceError::MultipleMatch { predicates, .. }) if both && predicates == [1, 2] => overlaps += 1,
            Ok(_) if !both => {}
            other => failures.push(format!("overlap scale at x={x}: {other:?}")),
        }
    }
    let sampled = validate_scale_disjointness(&overlapping, &spec).unwrap();
    if sampled.overlaps.len() != overlaps || overlaps == 0 {
        failures.push(format!("disjointness check found {} of {overlaps} overlaps", sampled.overlaps.len()));
    }
    outcome(
        &failures,
        format!(
            "{fixtures} fixture(s): {checked} scale samples with exactly one state, {paths} paths on the refinement tree, MultipleMatch at all {overlaps} overlap samples"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();
    let mut cases = 0;
    let mut cycles = 0;
    let mut check = |name: String, values: Vec<f64>, f: &dyn Fn(&devdiag_core::dynamics::TrendClass) -> bool| {
        cases += 1;
        let c = classify_series(&ParameterSeries::from_values("x", values.clone()).unwrap(), 0.0).unwrap();
        if !f(&c) {
            failures.push(format!("{name}: {c:?}"));
        }
        if let Some(p) = c.period {
            cycles += 1;
            if p < 2 || (p..values.len()).any(|t| (values[t] - values[t - p]).abs() > 0.0) {
                failures.push(format!("{name}: unsound period {p}"));
            }
        }
    };
    for n in [3usize, 5, 10, 40] {
        for slope in [0.5, 1.0, 7.0] {
            let up: Vec<f64> = (0..n).map(|i| slope * i as f64 - 3.0).collect();
            let down: Vec<f64> = up.iter().map(|v| -v).collect();
            check(format!("up n={n} a={slope}"), up, &|c| {
                c.monotone == Monotone::Increasing && c.critical_count() == 0
            });
            check(format!("down n={n} a={slope}"), down, &|c| {
                c.monotone == Monotone::Decreasing && c.critical_count() == 0
            });
        }
    }
    for p in [2usize, 4, 6, 8, 10] {
        let half = p / 2;
        for reps in [2usize, 3, 5] {
            let wave: Vec<f64> = (0..p * reps)
                .map(|t| {
                    let r = t % p;
                    (if r <= half { r } else { p - r }) as f64
                })
                .collect();
            check(format!("triangle p={p} x{reps}"), wave, &move |c| c.period == Some(p));
        }
    }
    for vertex in [2.0, 4.5, 7.3, 10.0] {
        for sign in [-1.0, 1.0] {
            let xs: Vec<f64> = (0..13).map(|t| sign * (t as f64 - vertex).powi(2)).collect();
            let kind = if sign < 0.0 { Extremum::Max } else { Extremum::Min };
            check(format!("parabola v={vertex} s={sign}"), xs, &move |c| {
                c.critical_count() == 1 && c.critical_points[0].kind == kind
            });
        }
    }
    let total = cases;
    outcome(
        &failures,
        format!("{total}/{total} synthetic series classified correctly, {cycles} reported cycles all sound"),
    )
}

fn firings_at(events: &[Event], tick: u64) -> Vec<&Event> {
    events.iter().filter(|e| e.tick == tick && e.kind == EventKind::Firing).collect()
}

fn criterion_7() -> Outcome {
    let mut failures = Vec::new();
    let model = two_level();
    let sc = &model.scenarios["baseline"].scenario;
    let tr = run_scenario(sc, sc.horizon.unwrap()).unwrap();
    let at1 = firings_at(&tr.events, 1);
    let parent = at1.iter().find(|e| e.subsystem == "plant");
    match parent {
        Some(p) if matches!(p.cause, Some(Cause::Direct { .. })) => {
            for child in ["unitA", "unitB"] {
                let ok = at1
                    .iter()
                    .any(|e| e.subsystem == child && e.cause == Some(Cause::Downward { parent: p.seq }));
                if !ok {
                    failures.push(format!("no downward firing of {child} at tick 1"));
                }
            }
        }
        _ => failures.push("general symbol did not fire the parent directly".into()),
    }

    // Tuple (a3, b3) of link p2 completed by per-child deliveries at tick 4.
    if sc.after_effect.upward_threshold != Threshold::All {
        failures.push("fixture threshold is not 'all'".into());
    }
    let at4 = firings_at(&tr.events, 4);
    let kids: Vec<u64> = at4
        .iter()
        .filter(|e| e.subsystem != "plant" && matches!(e.cause, Some(Cause::Direct { .. })))
        .map(|e| e.seq)
        .collect();
    let up = at4.iter().find(|e| e.subsystem == "plant");
    match up.and_then(|e| e.cause.clone()) {
        Some(Cause::Upward { children }) if children == kids && kids.len() == 2 => {}
        other => failures.push(format!("tick 4 parent firing cause {other:?}")),
    }

    // Removing one child delivery leaves the tuple incomplete.
    let mut partial = sc.clone();
    partial.time_diagram.retain(|c| !(c.tick == 4 && c.symbol == "b_finish"));
    let ptr = run_scenario(&partial, 8).unwrap();
    if firings_at(&ptr.events, 4).iter().any(|e| e.subsystem == "plant") {
        failures.push("parent fired with an incomplete tuple under threshold all".into());
    }

    // Isolated arcs cannot sit in a parent link tuple.
    let mut bad = sc.clone();
    bad.after_effect.parent_links.push(ParentLink {
        parent: ArcRef::new("H-plant", "p2"),
        children: vec![ArcRef::new("H-unitA", "a2"), ArcRef::new("H-unitB", "b2")],
    });
    if validate_scenario(&bad).findings.iter().all(|f| f.code != "link-not-coupled") {
        failures.push("isolated arcs accepted in a parent link".into());
    }

    let mut individual = 0;
    for seed in 0..100u64 {
        let s = synthetic_scenario(seed);
        let t = run_scenario(&s, s.horizon.unwrap()).unwrap();
        let by_seq: HashMap<u64, &Event> = t.events.iter().map(|e| (e.seq, e)).collect();
        for e in t.events.iter().filter(|e| e.is_transition()) {
            let mut stack = vec![e.seq];
            while let Some(s) = stack.pop() {
                match &by_seq[&s].cause {
                    Some(Cause::Direct { delivery }) => {
                        let d = by_seq[delivery];
                        if d.symbol_class == Some(SymbolClass::Individual) {
                            individual += 1;
                            if d.subsystem != e.subsystem {
                                failures.push(format!("seed {seed}: '{}' moved {}", d.subsystem, e.subsystem));
                            }
                        }
                    }
                    Some(Cause::Downward { parent }) => stack.push(*parent),
                    Some(Cause::Upward { children }) => stack.extend(children),
                    _ => {}
                }
            }
        }
    }
    outcome(
        &failures,
        format!(
            "downward and upward (tuple completed by per-child deliveries, threshold all) in one tick with cause labels; {individual} individual firings over 100 scenarios all local"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let a = CanonicalDiagram::chain("a", 3, 1, 10);
    let b = CanonicalDiagram::chain("b", 3, 1, 10);
    for intervals in [[5u64, 5], [6, 4]] {
        let set = TimedDiagramSet::new(vec![a.clone(), b.clone()], intervals.to_vec()).unwrap();
        if !matches!(compose_sequential(&set, "s"), Err(CompositionError::IntervalOrderViolation { .. })) {
            failures.push(format!("sequential accepted {intervals:?}"));
        }
    }
    let set = TimedDiagramSet::new(vec![a, b], vec![5, 6]).unwrap();
    if !matches!(compose_parallel(&set), Err(CompositionError::IntervalMismatch { .. })) {
        failures.push("parallel accepted mismatched intervals".into());
    }

    let mut products = 0;
    for n in 1..=4usize {
        for m in 1..=4usize {
            for seed in 0..3u64 {
                let mut pair = Vec::new();
                for (i, size) in [n, m].into_iter().enumerate() {
                    let mut d = CanonicalDiagram::chain(&format!("c{i}"), size, 1, 6);
                    for j in 0..size {
                        if (j as u64 + seed).is_multiple_of(2) && j + 2 < size {
                            let arc = TimedArc::new(&d.states[j], &d.states[j + 2], 2);
                            d.dev_arcs.push(arc);
                        }
                        if j > 0 && (j as u64 + seed).is_multiple_of(3) {
                            let arc = TimedArc::new(&d.states[j], &d.states[j - 1], 1);
                            d.back_arcs.push(arc);
                        }
                    }
                    pair.push(d);
                }
                let set = TimedDiagramSet::new(pair, vec![6, 6]).unwrap();
                let p = compose_parallel(&set).unwrap();
                products += 1;
                if p.state_count() != n * m {
                    failures.push(format!("{n}x{m}: {} states", p.state_count()));
                }
            }
        }
    }

    let mut executions = 0;
    let mut firings = 0;
    for seed in 0..50u64 {
        let set = synthetic_diagram_set(
            seed,
            SyntheticShape {
                max_diagrams: 3,
                max_states: 4,
                max_arcs: 6,
                max_delay: 2,
                horizon: 8,
            },
        );
        let p = compose_parallel(&set).unwrap();
        let mut state = p.initial;
        let mut entries = vec![0u64; set.len()];
        let mut now = 0;
        let mut per_component: Vec<Vec<(u64, ArcKey)>> = vec![Vec::new(); set.len()];
        for k in 0..10u64 {
            let options = p.enabled(state, &entries, now);
            if options.is_empty() {
                break;
            }
            let (arc, earliest) = options[((seed * 7 + k * 3) as usize) % options.len()];
            let tick = (earliest + (seed + k) % 2).min(p.interval);
            let a = &p.arcs[arc];
            per_component[a.component].push((tick, a.arc.clone()));
            entries[a.component] = tick;
            now = tick;
            state = a.to;
            firings += 1;
        }
        executions += 1;
        for (c, steps) in per_component.iter().enumerate() {
            let d = &set.diagrams()[c];
            let mut dist = ObjectDistribution::new();
            dist.place("x", &d.initial, 0);
            let mut counters = ArcCounters::new();
            for (tick, key) in steps {
                if let Err(e) = apply_transition(&mut dist, &mut counters, d, "x", key, *tick) {
                    failures.push(format!("seed {seed} component {c}: {e}"));
                    break;
                }
            }
            if dist.get("x").unwrap().state != p.states[state][c] {
                failures.push(format!("seed {seed} component {c}: projection ends elsewhere"));
            }
        }
    }
    outcome(
        &failures,
        format!(
            "bad intervals rejected, {products} products up to 4x4 have n*m states, {executions} executions ({firings} firings) project to legal child runs"
        ),
    )
}

fn recount(sc: &Scenario, initial: &Configuration, csv_text: &str) -> (bool, Vec<String>, u64, u64) {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let mut last: BTreeMap<String, String> =
        initial.subsystems.iter().map(|(k, v)| (k.clone(), v.state.clone())).collect();
    let mut classes: BTreeMap<String, (bool, bool)> = BTreeMap::new();
    let (mut omitted, mut complex) = (0, 0);
    for row in rdr.records() {
        let row = row.unwrap();
        let (kind, sub, class, arc, to) = (&row[2], &row[3], &row[5], &row[6], &row[8]);
        match kind {
            "delivery" | "ineffective" => {
                let c = classes.entry(sub.to_string()).or_default();
                c.0 |= class == "individual";
                c.1 |= class == "general";
            }
            "backstep" => {
                omitted += 1;
                last.insert(sub.to_string(), to.to_string());
            }
            "firing" => {
                let d = sc.diagram_of(sub).unwrap();
                if sc.after_effect.coupled_arcs.contains(&ArcRef::new(&d.id, arc)) {
                    complex += 1;
                }
                last.insert(sub.to_string(), to.to_string());
            }
            _ => {}
        }
    }
    let complete = last.iter().all(|(s, st)| sc.diagram_of(s).unwrap().final_state == *st);
    let redundant = classes.into_iter().filter(|(_, (i, g))| *i && *g).map(|(s, _)| s).collect();
    (complete, redundant, omitted, complex)
}

fn criterion_9() -> Outcome {
    let mut failures = Vec::new();
    let mut events = 0;
    for seed in 0..100u64 {
        let sc = synthetic_scenario(seed);
        let tr = run_scenario(&sc, sc.horizon.unwrap()).unwrap();
        let report = analyze_trajectory(&tr, &sc, None).unwrap();
        events += tr.events.len();
        let (complete, redundant, omitted, complex) = recount(&sc, &tr.initial, &events_to_csv(&tr.events));
        let listed: Vec<String> = report.redundancy.iter().map(|r| r.subsystem.clone()).collect();
        if report.complete != complete
            || listed != redundant
            || report.omitted_possibilities.total != omitted
            || report.complexness.total != complex
        {
            failures.push(format!("seed {seed}: report and CSV recount differ"));
        }
    }
    let model = two_level();
    for (id, sm) in &model.scenarios {
        let tr = run_scenario(&sm.scenario, sm.scenario.horizon.unwrap()).unwrap();
        let report = analyze_trajectory(&tr, &sm.scenario, None).unwrap();
        let (complete, ..) = recount(&sm.scenario, &tr.initial, &events_to_csv(&tr.events));
        if report.complete != complete {
            failures.push(format!("{id}: completeness differs"));
        }
    }
    outcome(
        &failures,
        format!("100 scenarios ({events} events): completeness, redundancy, omitted possibilities, complexness match the CSV recount"),
    )
}

fn main() {
    let criteria: [(fn() -> Outcome, Duration); 9] = [
        (criterion_1, Duration::from_secs(1)),
        (criterion_2, Duration::from_secs(1)),
        (criterion_3, Duration::from_secs(120)),
        (criterion_4, Duration::from_secs(120)),
        (criterion_5, Duration::from_secs(120)),
        (criterion_6, Duration::from_secs(10)),
        (criterion_7, Duration::from_secs(60)),
        (criterion_8, Duration::from_secs(60)),
        (criterion_9, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut o = run();
        let took = start.elapsed();
        if took > *budget {
            o.pass = false;
            o.detail = format!("{} (over the {:.0?} budget)", o.detail, budget);
        }
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict} [{:.3}s] {}", i + 1, took.as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}
