use approx::assert_abs_diff_eq;
use hadamard_prox::prelude::*;

fn quadratic_trace(n: usize) -> (Space, Functional, Trace) {
    let s = Space::euclidean(1).unwrap();
    let f = Functional::squared_distance(&s, s.point(vec![0.0]).unwrap(), 1.0).unwrap();
    let t = run_ppa(
        &f,
        &s.point(vec![1.0]).unwrap(),
        &StepSchedule::constant(1.0).unwrap(),
        &StopRule { step_distance_below: None, ..StopRule::iterations(n) },
        &ResolventOptions::default(),
    )
    .unwrap();
    (s, f, t)
}

fn alternating(s: &Space) -> (Point, Point, SequenceWindow) {
    let a = s.point(vec![0.0, 0.0]).unwrap();
    let b = s.point(vec![2.0, 0.0]).unwrap();
    let w = SequenceWindow::new((0..60).map(|k| if k % 2 == 0 { a.clone() } else { b.clone() }).collect(), "alt").unwrap();
    (a, b, w)
}

#[test]
fn asymptotic_centers() {
    let s = Space::euclidean(2).unwrap();
    let m = s.point(vec![0.3, -0.4]).unwrap();
    let constant = SequenceWindow::new(vec![m.clone(); 5], "c").unwrap();
    let c = asymptotic_center(&s, &constant, &CenterSearch::default()).unwrap();
    assert!(s.distance(&c, &m).unwrap() < 1e-9);

    let (_, _, alt) = alternating(&s);
    let c = asymptotic_center(&s, &alt, &CenterSearch::default()).unwrap();
    // max(|c|, |c - (2,0)|) is minimized at the midpoint
    assert!(s.distance(&c, &s.point(vec![1.0, 0.0]).unwrap()).unwrap() < 1e-6);

    let (s1, _, t) = quadratic_trace(80);
    let tail = SequenceWindow::tail(&t, 50, "q").unwrap();
    let c = asymptotic_center(&s1, &tail, &CenterSearch::default()).unwrap();
    assert!(c.coords().unwrap()[0].abs() < 1e-4);
}

#[test]
fn weak_convergence_verdicts() {
    let (s1, _, t) = quadratic_trace(80);
    let tail = SequenceWindow::tail(&t, 50, "q").unwrap();
    let zero = s1.point(vec![0.0]).unwrap();
    let r = weak_convergence_check(&s1, &tail, &zero, 16, 1, Execution::Parallel).unwrap();
    assert!(r.passed());
    assert!(r.max_gap <= 1e-3);

    let s = Space::euclidean(2).unwrap();
    let m = s.point(vec![1.0, 1.0]).unwrap();
    let constant = SequenceWindow::new(vec![m.clone(); 50], "c").unwrap();
    let r = weak_convergence_check(&s, &constant, &m, 16, 2, Execution::Sequential).unwrap();
    assert_eq!(r.max_gap, 0.0);

    let (a, _, alt) = alternating(&s);
    let r = weak_convergence_check(&s, &alt, &a, 32, 3, Execution::Parallel).unwrap();
    assert!(!r.passed());
    assert!(r.max_gap >= 0.5);
    assert!(weak_convergence_check(&s, &alt, &a, 0, 3, Execution::Parallel).is_err());
}

#[test]
fn weak_convergence_on_a_tree() {
    let names = ["a", "b", "c", "d"].map(String::from).to_vec();
    let t = Space::tree(
        MetricTree::new(
            names,
            vec![("a".into(), "c".into(), 1.0), ("c".into(), "b".into(), 2.0), ("c".into(), "d".into(), 1.5)],
        )
        .unwrap(),
    );
    let a = t.vertex("a").unwrap();
    let b = t.vertex("b").unwrap();
    let alt = SequenceWindow::new((0..50).map(|k| if k % 2 == 0 { a.clone() } else { b.clone() }).collect(), "t").unwrap();
    let r = weak_convergence_check(&t, &alt, &a, 16, 0, Execution::Parallel).unwrap();
    assert!(!r.passed());
    let still = SequenceWindow::new(vec![b.clone(); 50], "s").unwrap();
    assert!(weak_convergence_check(&t, &still, &b, 16, 0, Execution::Parallel).unwrap().passed());
}

#[test]
fn fejer_analysis_examples() {
    let (s, _, t) = quadratic_trace(30);
    let c = ConvexSet::Singleton(s.point(vec![0.0]).unwrap());
    let all = SequenceWindow::tail(&t, t.iterates.len(), "q").unwrap();
    assert!(fejer_analysis(&s, &all, &c).unwrap().passed());

    let constant = SequenceWindow::new(vec![s.point(vec![2.0]).unwrap(); 4], "c").unwrap();
    let r = fejer_analysis(&s, &constant, &c).unwrap();
    assert!(r.passed());
    assert_eq!(r.worst_residual, 0.0);

    let mut points = t.iterates.clone();
    points[7] = s.point(vec![40.0]).unwrap();
    let corrupted = SequenceWindow::new(points, "bad").unwrap();
    let r = fejer_analysis(&s, &corrupted, &c).unwrap();
    assert!(r.failed());
    assert_eq!(r.worst_index, Some(7));
}

#[test]
fn weak_lsc_examples() {
    let (s, f, t) = quadratic_trace(40);
    let tail = SequenceWindow::tail(&t, 20, "q").unwrap();
    let zero = s.point(vec![0.0]).unwrap();
    assert!(weak_lsc_probe(&f, &tail, &zero).unwrap().passed());

    let constant = SequenceWindow::new(vec![s.point(vec![0.5]).unwrap(); 3], "c").unwrap();
    let r = weak_lsc_probe(&f, &constant, &s.point(vec![0.5]).unwrap()).unwrap();
    assert_abs_diff_eq!(r.worst_residual, 0.0, epsilon = 0.0);

    let d = Functional::distance(&s, s.point(vec![-1.0]).unwrap(), 1.0).unwrap();
    let run = run_ppa(
        &d,
        &s.point(vec![3.0]).unwrap(),
        &StepSchedule::constant(0.5).unwrap(),
        &StopRule::iterations(30),
        &ResolventOptions::default(),
    )
    .unwrap();
    let w = SequenceWindow::tail(&run, 10, "d").unwrap();
    assert!(weak_lsc_probe(&d, &w, &s.point(vec![-1.0]).unwrap()).unwrap().passed());
}
