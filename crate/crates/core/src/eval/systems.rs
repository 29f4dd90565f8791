//! Built-in reaction systems with reference log-rates and initial states.

use crate::error::{Error, Result};
use crate::network::{parse_network, LogRates, ReactionNetwork};

#[derive(Debug, Clone)]
pub struct BuiltinSystem {
    pub name: &'static str,
    pub network: ReactionNetwork,
    pub beta_true: LogRates,
    pub y0: Vec<f64>,
}

/// Cell differentiation: birth and death of A, death of D, and the
/// differentiation steps A → 2B, B → 2C, B → 2D.
pub const CELL_DIFF: &str = "\
species: A B C D
0 -> A @ beta1
A -> 0 @ beta2
D -> 0 @ beta3
A -> 2 B @ beta4
B -> 2 C @ beta5
B -> 2 D @ beta6
";

pub const CELL_DIFF_BETA: [f64; 6] = [5.30, 1.10, -0.11, -0.22, -0.22, -1.61];
pub const CELL_DIFF_Y0: [f64; 4] = [50.0, 100.0, 100.0, 200.0];

const FIRST_ORDER_BETA: [f64; 6] = [-2.0, -2.3, -1.6, -2.5, -1.9, -3.0];
const BLOCK_Y0: f64 = 100.0;

/// Six reactions over `6·blocks` species; every reactant and product of
/// the single-block system is replicated across blocks, so reactions of
/// order `blocks` connect the blocks.
fn particle_system(blocks: usize) -> String {
    let base: [(&[usize], &[usize]); 6] = [
        (&[1], &[2]),
        (&[1], &[3]),
        (&[2], &[4]),
        (&[1], &[4]),
        (&[4], &[6]),
        (&[5], &[5]),
    ];
    let side = |idx: &[usize]| -> String {
        let mut terms = Vec::new();
        for &i in idx {
            for b in 0..blocks {
                terms.push(format!("Y{}", i + 6 * b));
            }
        }
        terms.join(" + ")
    };
    let species: Vec<String> = (1..=6 * blocks).map(|i| format!("Y{i}")).collect();
    let mut text = format!("species: {}\n", species.join(" "));
    for (m, (k, s)) in base.iter().enumerate() {
        text.push_str(&format!("{} -> {} @ theta{}\n", side(k), side(s), m + 1));
    }
    text
}

/// Six species with `6·blocks` reactions. Species indices beyond six in the
/// extra blocks are taken modulo six, which keeps the species count at six;
/// block reactions reuse the six rate labels.
fn reaction_system(blocks: usize) -> String {
    let first: [(&[usize], &[usize]); 6] = [
        (&[2], &[1, 3]),
        (&[3], &[2, 4]),
        (&[4], &[3, 5]),
        (&[5], &[4, 6]),
        (&[5], &[6]),
        (&[6], &[1]),
    ];
    let extra: [(&[usize], &[usize]); 6] = [
        (&[8], &[7, 9]),
        (&[9], &[8, 10]),
        (&[10], &[9, 11]),
        (&[11], &[10, 12]),
        (&[12], &[11]),
        (&[7], &[12]),
    ];
    let fold = |i: usize| (i - 1) % 6 + 1;
    let side = |idx: &[usize], shift: usize| -> String {
        idx.iter()
            .map(|&i| format!("Y{}", fold(i + shift)))
            .collect::<Vec<_>>()
            .join(" + ")
    };
    let mut text = String::from("species: Y1 Y2 Y3 Y4 Y5 Y6\n");
    for (m, (k, s)) in first.iter().enumerate() {
        text.push_str(&format!("{} -> {} @ theta{}\n", side(k, 0), side(s, 0), m + 1));
    }
    for b in 1..blocks {
        for (m, (k, s)) in extra.iter().enumerate() {
            let shift = 6 * (b - 1);
            text.push_str(&format!("{} -> {} @ theta{}\n", side(k, shift), side(s, shift), m + 1));
        }
    }
    text
}

fn build(name: &'static str, text: &str, beta: Vec<f64>, y0: Vec<f64>) -> Result<BuiltinSystem> {
    Ok(BuiltinSystem {
        name,
        network: parse_network(text)?,
        beta_true: LogRates::new(beta)?,
        y0,
    })
}

/// Names accepted by [`builtin_system`].
pub const BUILTIN_NAMES: [&str; 7] = [
    "cell-diff",
    "particles-6",
    "particles-12",
    "particles-18",
    "reactions-6",
    "reactions-12",
    "reactions-18",
];

pub fn builtin_system(name: &str) -> Result<BuiltinSystem> {
    let shifted = |order: i32| -> Vec<f64> {
        // Rates of order-k reactions scaled so hazards at the initial state
        // match the first-order system.
        FIRST_ORDER_BETA
            .iter()
            .map(|b| b - f64::from(order - 1) * BLOCK_Y0.ln())
            .collect()
    };
    match name {
        "cell-diff" => build("cell-diff", CELL_DIFF, CELL_DIFF_BETA.to_vec(), CELL_DIFF_Y0.to_vec()),
        "particles-6" => build("particles-6", &particle_system(1), shifted(1), vec![BLOCK_Y0; 6]),
        "particles-12" => build("particles-12", &particle_system(2), shifted(2), vec![BLOCK_Y0; 12]),
        "particles-18" => build("particles-18", &particle_system(3), shifted(3), vec![BLOCK_Y0; 18]),
        "reactions-6" => build("reactions-6", &reaction_system(1), shifted(1), vec![BLOCK_Y0; 6]),
        "reactions-12" => build("reactions-12", &reaction_system(2), shifted(1), vec![BLOCK_Y0; 6]),
        "reactions-18" => build("reactions-18", &reaction_system(3), shifted(1), vec![BLOCK_Y0; 6]),
        other => Err(Error::InvalidArgument(format!(
            "unknown built-in system '{other}' (known: {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

/// Every built-in system.
pub fn builtin_systems() -> Vec<BuiltinSystem> {
    BUILTIN_NAMES
        .iter()
        .map(|n| builtin_system(n).expect("built-in systems are valid"))
        .collect()
}
