use indukt::corpus::Corpus;
use indukt::dsl::*;
use proptest::prelude::*;

pub const CASES: u32 = 10_000;

fn arg() -> impl Strategy<Value = i64> {
    prop_oneof![
        8 => -20i64..20,
        1 => -INT_LIMIT..=INT_LIMIT,
    ]
}

fn stage() -> impl Strategy<Value = Stage> {
    (0..Primitive::ALL.len(), prop::collection::vec(arg(), 2)).prop_filter_map("argument domain", |(i, args)| {
        let p = Primitive::ALL[i];
        Stage::new(p, args[..p.arity()].to_vec()).ok()
    })
}

fn program() -> impl Strategy<Value = Program> {
    prop::collection::vec(stage(), 1..6).prop_map(|s| Program::new(s).expect("non-empty"))
}

fn list() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-1000i64..=1000, 0..12)
}

/// The program text with arbitrary extra whitespace around tokens.
fn respaced(p: &Program, pads: &[usize]) -> String {
    let mut pads = pads.iter().cycle();
    let mut pad = || " ".repeat(*pads.next().unwrap());
    let stages: Vec<String> = p
        .stages()
        .iter()
        .map(|s| {
            let mut parts = vec![s.primitive().name().to_string()];
            parts.extend(s.args().iter().map(|a| a.to_string()));
            format!("{}{}{}", pad(), parts.join(&format!(" {}", pad())), pad())
        })
        .collect();
    stages.join("|")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn pretty_text_parses_back(p in program(), pads in prop::collection::vec(0usize..3, 1..8)) {
        prop_assert_eq!(parse(&p.pretty()).unwrap(), p.clone());
        let loose = respaced(&p, &pads);
        prop_assert_eq!(parse(&loose).unwrap().pretty(), p.pretty());
    }

    #[test]
    fn evaluation_is_deterministic(p in program(), xs in list()) {
        let a = evaluate(&p, &xs, DEFAULT_STEP_BUDGET);
        let b = evaluate(&p, &xs, DEFAULT_STEP_BUDGET);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn evaluation_respects_the_step_budget(p in program(), xs in list(), budget in 0u64..400) {
        let out = evaluate(&p, &xs, budget);
        prop_assert!(out.steps_used <= budget);
        match out.status {
            EvalStatus::Ok => {
                let ys = out.output.unwrap();
                prop_assert!(ys.iter().all(|y| y.abs() <= INT_LIMIT));
                // the same run fits in any larger budget
                prop_assert_eq!(evaluate(&p, &xs, budget + 100).output, Some(ys));
            }
            EvalStatus::StepBudgetExceeded => prop_assert!(out.output.is_none()),
            EvalStatus::ArityOrNameError => prop_assert!(false, "validated program reported a name error"),
        }
    }

    #[test]
    fn empty_input_is_total(p in program()) {
        let out = evaluate(&p, &[], DEFAULT_STEP_BUDGET);
        prop_assert!(matches!(out.status, EvalStatus::Ok | EvalStatus::StepBudgetExceeded));
        if out.status == EvalStatus::Ok {
            prop_assert!(out.output.is_some());
        }
    }
}

#[test]
fn reference_programs_reproduce_every_example() {
    let corpus = Corpus::mini();
    let mut checks = 0;
    for task in corpus.tasks() {
        let reference = task.reference_program.as_deref().expect("mini corpus has references");
        let program = parse(reference).unwrap();
        for ex in &task.examples {
            let out = evaluate(&program, &ex.input, DEFAULT_STEP_BUDGET);
            assert_eq!(out.output.as_ref(), Some(&ex.output), "{} on {:?}", task.id, ex.input);
            checks += 1;
        }
    }
    assert_eq!(checks, 110);
}
