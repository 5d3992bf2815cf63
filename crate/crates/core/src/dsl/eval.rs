use serde::{Deserialize, Serialize};

use super::{parse, Primitive, Program, Stage, INT_LIMIT};

/// Step budget used when the caller has no particular limit in mind.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    StepBudgetExceeded,
    ArityOrNameError,
}

/// Result of running a program on one input.
///
/// `output` is present iff `status` is `Ok`. `steps_used` counts the steps of
/// every stage that completed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub status: EvalStatus,
    pub output: Option<Vec<i64>>,
    pub steps_used: u64,
}

fn clamp(v: i128) -> i64 {
    v.clamp(-(INT_LIMIT as i128), INT_LIMIT as i128) as i64
}

/// Upper bound on the stage output length, exact for the growing
/// primitives, computed without materializing the output.
fn output_len(stage: &Stage, input: &[i64]) -> u64 {
    let n = input.len() as u64;
    match stage.primitive() {
        Primitive::Repeat => n.saturating_mul(stage.args()[0] as u64),
        Primitive::ConcatSelf => n.saturating_mul(2),
        Primitive::Append | Primitive::Prepend | Primitive::Insert => n + 1,
        // aggregates turn [] into a singleton
        _ => n.max(1),
    }
}

/// Runs `program` on `input`.
///
/// Each stage costs one step plus one step per element read and one per
/// element written. Costs are checked before a stage allocates its output,
/// so runaway `repeat` and `concat_self` chains stop at the budget.
pub fn evaluate(program: &Program, input: &[i64], budget: u64) -> EvalOutcome {
    let mut current = input.to_vec();
    let mut used: u64 = 0;
    for stage in program.stages() {
        // upper bound first; the exact cost is charged after the stage runs
        let bound = 1 + current.len() as u64 + output_len(stage, &current);
        if used.saturating_add(bound) > budget {
            let exact = 1 + current.len() as u64 + apply_len_exact(stage, &current);
            if used.saturating_add(exact) > budget {
                return EvalOutcome {
                    status: EvalStatus::StepBudgetExceeded,
                    output: None,
                    steps_used: used,
                };
            }
        }
        let next = apply(stage, &current);
        used += 1 + current.len() as u64 + next.len() as u64;
        current = next;
    }
    EvalOutcome {
        status: EvalStatus::Ok,
        output: Some(current),
        steps_used: used,
    }
}

/// Exact output length for the growing primitives; for everything else the
/// output is bounded by `n + 1` and cheap to compute.
fn apply_len_exact(stage: &Stage, input: &[i64]) -> u64 {
    match stage.primitive() {
        Primitive::Repeat | Primitive::ConcatSelf => output_len(stage, input),
        _ => apply(stage, input).len() as u64,
    }
}

/// Parses and evaluates in one go.
pub fn evaluate_text(text: &str, input: &[i64], budget: u64) -> Result<EvalOutcome, super::ParseError> {
    let program = parse(text)?;
    Ok(evaluate(&program, input, budget))
}

fn singleton(v: Option<i64>) -> Vec<i64> {
    v.into_iter().collect()
}

fn rotate_left(xs: &[i64], k: i64) -> Vec<i64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let k = k.rem_euclid(xs.len() as i64) as usize;
    let mut out = xs[k..].to_vec();
    out.extend_from_slice(&xs[..k]);
    out
}

fn floor_mod(a: i64, m: i64) -> i64 {
    let (a, m) = (a as i128, m as i128);
    clamp(((a % m) + m) % m)
}

fn apply(stage: &Stage, xs: &[i64]) -> Vec<i64> {
    let args = stage.args();
    let n = xs.len() as i64;
    let map = |f: &dyn Fn(i128) -> i128| xs.iter().map(|&x| clamp(f(x as i128))).collect();
    match stage.primitive() {
        Primitive::Identity => xs.to_vec(),
        Primitive::Reverse => xs.iter().rev().copied().collect(),
        Primitive::Sort => {
            let mut out = xs.to_vec();
            out.sort_unstable();
            out
        }
        Primitive::Unique => {
            let mut seen = std::collections::HashSet::new();
            xs.iter().copied().filter(|x| seen.insert(*x)).collect()
        }
        Primitive::Head => singleton(xs.first().copied()),
        Primitive::Tail => xs.iter().skip(1).copied().collect(),
        Primitive::Last => singleton(xs.last().copied()),
        Primitive::Init => xs[..xs.len().saturating_sub(1)].to_vec(),
        Primitive::Length => vec![clamp(xs.len() as i128)],
        Primitive::Sum => vec![clamp(xs.iter().map(|&x| x as i128).sum())],
        Primitive::Max => singleton(xs.iter().max().copied()),
        Primitive::Min => singleton(xs.iter().min().copied()),
        Primitive::Take => xs[..args[0].clamp(0, n) as usize].to_vec(),
        Primitive::Drop => xs[args[0].clamp(0, n) as usize..].to_vec(),
        Primitive::Append => {
            let mut out = xs.to_vec();
            out.push(args[0]);
            out
        }
        Primitive::Prepend => {
            let mut out = Vec::with_capacity(xs.len() + 1);
            out.push(args[0]);
            out.extend_from_slice(xs);
            out
        }
        Primitive::Remove => xs.iter().copied().filter(|&x| x != args[0]).collect(),
        Primitive::Count => vec![xs.iter().filter(|&&x| x == args[0]).count() as i64],
        Primitive::Add => map(&|x| x + args[0] as i128),
        Primitive::Sub => map(&|x| x - args[0] as i128),
        Primitive::Mul => map(&|x| x * args[0] as i128),
        Primitive::Mod => xs.iter().map(|&x| floor_mod(x, args[0])).collect(),
        Primitive::RotateLeft => rotate_left(xs, args[0]),
        Primitive::RotateRight => rotate_left(xs, -args[0]),
        // an empty list repeats to nothing, however large the count
        Primitive::Repeat if xs.is_empty() => Vec::new(),
        Primitive::Repeat => xs.repeat(args[0] as usize),
        Primitive::FilterEven => xs.iter().copied().filter(|x| x.rem_euclid(2) == 0).collect(),
        Primitive::FilterOdd => xs.iter().copied().filter(|x| x.rem_euclid(2) == 1).collect(),
        Primitive::FilterGt => xs.iter().copied().filter(|&x| x > args[0]).collect(),
        Primitive::FilterLt => xs.iter().copied().filter(|&x| x < args[0]).collect(),
        Primitive::Index => {
            let i = args[0];
            if i >= 1 && i <= n {
                vec![xs[(i - 1) as usize]]
            } else {
                Vec::new()
            }
        }
        Primitive::Slice => {
            let start = args[0].max(1);
            let end = args[1].min(n);
            if start > end {
                Vec::new()
            } else {
                xs[(start - 1) as usize..end as usize].to_vec()
            }
        }
        Primitive::Replace => xs
            .iter()
            .map(|&x| if x == args[0] { args[1] } else { x })
            .collect(),
        Primitive::Insert => {
            let at = (args[0].clamp(1, n + 1) - 1) as usize;
            let mut out = xs.to_vec();
            out.insert(at, args[1]);
            out
        }
        Primitive::ConcatSelf => {
            let mut out = xs.to_vec();
            out.extend_from_slice(xs);
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str, input: &[i64]) -> Vec<i64> {
        let outcome = evaluate(&parse(text).unwrap(), input, DEFAULT_STEP_BUDGET);
        assert_eq!(outcome.status, EvalStatus::Ok, "{text}");
        outcome.output.unwrap()
    }

    #[test]
    fn basic_examples() {
        assert_eq!(run("reverse", &[1, 2, 3]), vec![3, 2, 1]);
        assert_eq!(run("take 2 | add 1", &[5, 6, 7]), vec![6, 7]);
        assert_eq!(run("head", &[]), Vec::<i64>::new());
    }

    #[test]
    fn total_on_empty_lists() {
        let empty: Vec<i64> = vec![];
        for (text, expected) in [
            ("head", empty.clone()),
            ("last", empty.clone()),
            ("max", empty.clone()),
            ("min", empty.clone()),
            ("tail", empty.clone()),
            ("init", empty.clone()),
            ("index 1", empty.clone()),
            ("slice 1 3", empty.clone()),
            ("rotate_left 3", empty.clone()),
            ("length", vec![0]),
            ("sum", vec![0]),
            ("count 4", vec![0]),
            ("insert 5 7", vec![7]),
        ] {
            assert_eq!(run(text, &[]), expected, "{text}");
        }
    }

    #[test]
    fn positional_primitives() {
        let xs = [10, 20, 30, 40];
        assert_eq!(run("index 2", &xs), vec![20]);
        assert_eq!(run("index 0", &xs), Vec::<i64>::new());
        assert_eq!(run("index 5", &xs), Vec::<i64>::new());
        assert_eq!(run("slice 2 3", &xs), vec![20, 30]);
        assert_eq!(run("slice -4 2", &xs), vec![10, 20]);
        assert_eq!(run("slice 3 99", &xs), vec![30, 40]);
        assert_eq!(run("slice 3 2", &xs), Vec::<i64>::new());
        assert_eq!(run("insert 1 0", &xs), vec![0, 10, 20, 30, 40]);
        assert_eq!(run("insert 99 0", &xs), vec![10, 20, 30, 40, 0]);
        assert_eq!(run("insert -3 0", &xs), vec![0, 10, 20, 30, 40]);
        assert_eq!(run("rotate_left 1", &xs), vec![20, 30, 40, 10]);
        assert_eq!(run("rotate_right 1", &xs), vec![40, 10, 20, 30]);
        assert_eq!(run("rotate_left 6", &xs), vec![30, 40, 10, 20]);
        assert_eq!(run("take -1", &xs), Vec::<i64>::new());
        assert_eq!(run("drop 9", &xs), Vec::<i64>::new());
    }

    #[test]
    fn filters_and_sets() {
        let xs = [3, -2, 7, 3, 8, -1];
        assert_eq!(run("filter_even", &xs), vec![-2, 8]);
        assert_eq!(run("filter_odd", &xs), vec![3, 7, 3, -1]);
        assert_eq!(run("filter_gt 3", &xs), vec![7, 8]);
        assert_eq!(run("filter_lt 0", &xs), vec![-2, -1]);
        assert_eq!(run("unique", &xs), vec![3, -2, 7, 8, -1]);
        assert_eq!(run("remove 3", &xs), vec![-2, 7, 8, -1]);
        assert_eq!(run("count 3", &xs), vec![2]);
        assert_eq!(run("replace 3 0", &xs), vec![0, -2, 7, 0, 8, -1]);
        assert_eq!(run("sort", &xs), vec![-2, -1, 3, 3, 7, 8]);
    }

    #[test]
    fn floor_modulus_follows_divisor_sign() {
        assert_eq!(run("mod 3", &[-7, 7]), vec![2, 1]);
        assert_eq!(run("mod -3", &[-7, 7]), vec![-1, -2]);
    }

    #[test]
    fn arithmetic_saturates() {
        let big = INT_LIMIT;
        assert_eq!(run("add 10", &[big]), vec![big]);
        assert_eq!(run("mul -2", &[big]), vec![-big]);
        assert_eq!(run("sum", &[big, big]), vec![big]);
        assert_eq!(run("sub 5", &[-big]), vec![-big]);
    }

    #[test]
    fn repeat_under_tiny_budget_runs_out() {
        // cost of `repeat 3` on [1, 2] is 1 + 2 + 6 = 9 steps
        let p = parse("repeat 3").unwrap();
        let outcome = evaluate(&p, &[1, 2], 2);
        assert_eq!(outcome.status, EvalStatus::StepBudgetExceeded);
        assert_eq!(outcome.output, None);
        assert_eq!(evaluate(&p, &[1, 2], 9).status, EvalStatus::Ok);
        assert_eq!(evaluate(&p, &[1, 2], 8).status, EvalStatus::StepBudgetExceeded);
    }

    #[test]
    fn aggregate_of_empty_list_is_charged_its_output() {
        // length on []: 1 + 0 + 1
        let p = parse("identity | length").unwrap();
        assert_eq!(evaluate(&p, &[], 2).status, EvalStatus::StepBudgetExceeded);
        assert_eq!(evaluate(&p, &[], 3).output, Some(vec![0]));
    }

    #[test]
    fn huge_repeat_of_empty_list_is_cheap() {
        let outcome = evaluate(&parse("repeat 2147483647").unwrap(), &[], 10);
        assert_eq!(outcome.status, EvalStatus::Ok);
        assert_eq!(outcome.output, Some(vec![]));
        assert_eq!(outcome.steps_used, 1);
    }

    #[test]
    fn step_counting_matches_rule() {
        // reverse on 3 elements: 1 + 3 + 3; then take 1: 1 + 3 + 1
        let outcome = evaluate(&parse("reverse | take 1").unwrap(), &[1, 2, 3], 100);
        assert_eq!(outcome.steps_used, 7 + 5);
    }

    #[test]
    fn doubling_chain_is_cut_off() {
        let text = vec!["concat_self"; 60].join(" | ");
        let outcome = evaluate(&parse(&text).unwrap(), &[1, 2, 3], DEFAULT_STEP_BUDGET);
        assert_eq!(outcome.status, EvalStatus::StepBudgetExceeded);
        assert!(outcome.steps_used <= DEFAULT_STEP_BUDGET);
        let huge = evaluate(&parse("repeat 2000000000").unwrap(), &[1], DEFAULT_STEP_BUDGET);
        assert_eq!(huge.status, EvalStatus::StepBudgetExceeded);
    }
}
