//! Quasi-reaction networks, mass-action hazards and the text network format.
//!
//! A network has `p` species and `r` reactions. Reaction `j` consumes
//! `k_lj` units of species `l` and produces `s_lj`; its hazard in state `y`
//! is `exp(β_m) · Π_l C(y_l, k_lj)` where `m = param_map[j]` lets several
//! reactions share one log-rate.
//!
//! Text format, one reaction per line:
//!
//! ```text
//! # comment
//! species: A B C D
//! 0 -> A @ birth
//! A + 2 B -> C @ conv
//! ```
//!
//! `0` (or `∅`) is an empty side. A trailing `@ label` names the log-rate;
//! reactions with the same label share it. Reactions without a label get a
//! parameter of their own. Without a `species:` line, species are ordered by
//! first appearance.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss_gamma::special::ln_gamma;

/// Log reaction rates `β`, one per free parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogRates(Vec<f64>);

impl LogRates {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if let Some((i, b)) = beta.iter().enumerate().find(|(_, b)| !b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "log-rate {} is not finite ({b})",
                i + 1
            )));
        }
        Ok(LogRates(beta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `C(y, k)` for a nonnegative integer-valued `y`, zero when `y < k`.
pub fn binomial(y: f64, k: u32) -> f64 {
    let kf = k as f64;
    if y < kf {
        return 0.0;
    }
    match k {
        0 => 1.0,
        1 => y,
        2 => y * (y - 1.0) * 0.5,
        3..=20 => {
            let mut c = 1.0;
            for i in 0..k {
                c *= (y - i as f64) / (i as f64 + 1.0);
            }
            c
        }
        21..=1000 => (0..k)
            .map(|i| ((y - i as f64) / (i as f64 + 1.0)).ln())
            .sum::<f64>()
            .exp(),
        _ => (ln_gamma(y + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(y - kf + 1.0)).exp(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reaction_labels: Vec<String>,
    param_names: Vec<String>,
    /// `reactants[j][l] = k_lj`.
    reactants: Vec<Vec<u32>>,
    /// `products[j][l] = s_lj`.
    products: Vec<Vec<u32>>,
    param_map: Vec<usize>,
    net_effect: DMatrix<f64>,
}

impl ReactionNetwork {
    /// Build from per-reaction reactant and product columns.
    ///
    /// `param_map` holds 0-based parameter indices; `None` means one
    /// parameter per reaction.
    pub fn new(
        species: Vec<String>,
        reactants: Vec<Vec<u32>>,
        products: Vec<Vec<u32>>,
        param_map: Option<Vec<usize>>,
    ) -> Result<Self> {
        let p = species.len();
        let r = reactants.len();
        if p == 0 {
            return Err(Error::Dimension("network needs at least one species".into()));
        }
        if r == 0 {
            return Err(Error::Dimension("network needs at least one reaction".into()));
        }
        if products.len() != r {
            return Err(Error::Dimension(format!(
                "{r} reactant columns but {} product columns",
                products.len()
            )));
        }
        for (j, (k, s)) in reactants.iter().zip(&products).enumerate() {
            if k.len() != p || s.len() != p {
                return Err(Error::Dimension(format!(
                    "reaction {} has columns of length {}/{}, expected {p}",
                    j + 1,
                    k.len(),
                    s.len()
                )));
            }
        }
        let param_map = param_map.unwrap_or_else(|| (0..r).collect());
        if param_map.len() != r {
            return Err(Error::Dimension(format!(
                "param_map has {} entries for {r} reactions",
                param_map.len()
            )));
        }
        let d = param_map.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; d];
        for &m in &param_map {
            seen[m] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "parameter {} is not used by any reaction",
                missing + 1
            )));
        }
        let net_effect = DMatrix::from_fn(p, r, |l, j| products[j][l] as f64 - reactants[j][l] as f64);
        Ok(ReactionNetwork {
            reaction_labels: (1..=r).map(|j| format!("R{j}")).collect(),
            param_names: (1..=d).map(|m| format!("beta{m}")).collect(),
            species,
            reactants,
            products,
            param_map,
            net_effect,
        })
    }

    pub fn with_param_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "{} parameter names for {} parameters",
                names.len(),
                self.n_params()
            )));
        }
        self.param_names = names;
        Ok(self)
    }

    pub fn with_reaction_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_reactions() {
            return Err(Error::Dimension(format!(
                "{} reaction labels for {} reactions",
                labels.len(),
                self.n_reactions()
            )));
        }
        self.reaction_labels = labels;
        Ok(self)
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactants.len()
    }

    /// Number of free log-rate parameters `d`.
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn reaction_labels(&self) -> &[String] {
        &self.reaction_labels
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn param_map(&self) -> &[usize] {
        &self.param_map
    }

    /// `V = S - K`, `p × r`.
    pub fn net_effect(&self) -> &DMatrix<f64> {
        &self.net_effect
    }

    pub fn reactant_matrix(&self) -> DMatrix<i64> {
        DMatrix::from_fn(self.n_species(), self.n_reactions(), |l, j| self.reactants[j][l] as i64)
    }

    pub fn product_matrix(&self) -> DMatrix<i64> {
        DMatrix::from_fn(self.n_species(), self.n_reactions(), |l, j| self.products[j][l] as i64)
    }

    pub fn reactant_column(&self, j: usize) -> &[u32] {
        &self.reactants[j]
    }

    /// `0/1` incidence `M` with `M[j, m] = 1` iff reaction `j` uses parameter `m`.
    pub fn tying_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_reactions(), self.n_params(), |j, m| {
            f64::from(u8::from(self.param_map[j] == m))
        })
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n_species() {
            return Err(Error::Dimension(format!(
                "state has {} entries, network has {} species",
                y.len(),
                self.n_species()
            )));
        }
        Ok(())
    }

    fn check_rates(&self, rates: &LogRates) -> Result<()> {
        if rates.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "{} log-rates for {} parameters",
                rates.len(),
                self.n_params()
            )));
        }
        Ok(())
    }

    /// Binomial products `c_j(y) = Π_l C(y_l, k_lj)`, the hazard without its rate.
    pub fn propensity_factors(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_state(y)?;
        Ok(self.factors_unchecked(y))
    }

    pub(crate) fn factors_unchecked(&self, y: &[f64]) -> Vec<f64> {
        self.reactants
            .iter()
            .map(|k| {
                k.iter()
                    .zip(y)
                    .filter(|(&k, _)| k > 0)
                    .fold(1.0, |acc, (&k, &yl)| acc * binomial(yl, k))
            })
            .collect()
    }

    /// Per-reaction rates `θ_j = exp(β_{param_map(j)})`.
    pub fn reaction_rates(&self, rates: &LogRates) -> Result<Vec<f64>> {
        self.check_rates(rates)?;
        let beta = rates.as_slice();
        Ok(self.param_map.iter().map(|&m| beta[m].exp()).collect())
    }

    /// Mass-action hazards `λ_j(y)`.
    pub fn hazard(&self, rates: &LogRates, y: &[f64]) -> Result<Vec<f64>> {
        self.check_state(y)?;
        let theta = self.reaction_rates(rates)?;
        Ok(self
            .factors_unchecked(y)
            .into_iter()
            .zip(theta)
            .map(|(c, t)| t * c)
            .collect())
    }

    /// Expected event counts `μ_j = dt · λ_j(y_prev)` over an interval of length `dt`.
    pub fn interval_rates(&self, rates: &LogRates, y_prev: &[f64], dt: f64) -> Result<Vec<f64>> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "interval length must be positive, got {dt}"
            )));
        }
        Ok(self
            .hazard(rates, y_prev)?
            .into_iter()
            .map(|h| h * dt)
            .collect())
    }

    /// Parse the text network format.
    pub fn parse(text: &str) -> Result<Self> {
        parse_network(text)
    }

    /// Render in the text network format. `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "species: {}", self.species.join(" "));
        for j in 0..self.n_reactions() {
            let side = |counts: &[u32]| {
                let terms: Vec<String> = counts
                    .iter()
                    .zip(&self.species)
                    .filter(|(&c, _)| c > 0)
                    .map(|(&c, name)| if c == 1 { name.clone() } else { format!("{c} {name}") })
                    .collect();
                if terms.is_empty() {
                    "0".to_string()
                } else {
                    terms.join(" + ")
                }
            };
            let _ = writeln!(
                out,
                "{} -> {} @ {}",
                side(&self.reactants[j]),
                side(&self.products[j]),
                self.param_names[self.param_map[j]]
            );
        }
        out
    }
}

fn valid_species_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '.' || c == '\'')
}

fn parse_side(
    side: &str,
    line_no: usize,
    species: &mut Vec<String>,
    index: &mut HashMap<String, usize>,
    fixed_species: bool,
) -> Result<Vec<(usize, u32)>> {
    let side = side.trim();
    if side.is_empty() {
        return Err(Error::parse(line_no, "empty reaction side (use 0 for none)"));
    }
    if side == "0" || side == "∅" {
        return Ok(Vec::new());
    }
    let mut terms = Vec::new();
    for raw in side.split('+') {
        let term = raw.trim();
        if term.is_empty() {
            return Err(Error::parse(line_no, "dangling '+'"));
        }
        let parts: Vec<&str> = term.split_whitespace().collect();
        let (coef, name) = match parts.as_slice() {
            [name] => {
                let digits: String = name.chars().take_while(|c| c.is_ascii_digit()).collect();
                if digits.is_empty() {
                    (1, *name)
                } else {
                    let coef = digits
                        .parse::<u32>()
                        .map_err(|_| Error::parse(line_no, format!("bad coefficient in '{term}'")))?;
                    (coef, &name[digits.len()..])
                }
            }
            [coef, name] => {
                let coef = coef
                    .parse::<u32>()
                    .map_err(|_| Error::parse(line_no, format!("bad coefficient '{coef}'")))?;
                (coef, *name)
            }
            _ => return Err(Error::parse(line_no, format!("cannot read term '{term}'"))),
        };
        if !valid_species_name(name) {
            return Err(Error::parse(line_no, format!("invalid species name '{name}'")));
        }
        let idx = match index.get(name) {
            Some(&i) => i,
            None if fixed_species => {
                return Err(Error::parse(
                    line_no,
                    format!("species '{name}' not declared in the species line"),
                ))
            }
            None => {
                species.push(name.to_string());
                index.insert(name.to_string(), species.len() - 1);
                species.len() - 1
            }
        };
        if coef > 0 {
            terms.push((idx, coef));
        }
    }
    Ok(terms)
}

/// Species index and coefficient pairs of one side of a reaction.
type Side = Vec<(usize, u32)>;

/// Parse the text network format; see the module documentation.
pub fn parse_network(text: &str) -> Result<ReactionNetwork> {
    let mut species: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut fixed_species = false;
    let mut raw: Vec<(Side, Side, Option<String>)> = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("species:") {
            if fixed_species || !raw.is_empty() {
                return Err(Error::parse(line_no, "species line must come first and only once"));
            }
            for name in rest.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()) {
                if !valid_species_name(name) {
                    return Err(Error::parse(line_no, format!("invalid species name '{name}'")));
                }
                if index.insert(name.to_string(), species.len()).is_some() {
                    return Err(Error::parse(line_no, format!("species '{name}' declared twice")));
                }
                species.push(name.to_string());
            }
            fixed_species = true;
            continue;
        }
        let (body, label) = match line.split_once('@') {
            Some((body, label)) => {
                let label = label.trim();
                if label.is_empty() || label.contains(char::is_whitespace) {
                    return Err(Error::parse(line_no, format!("bad rate label '{label}'")));
                }
                (body, Some(label.to_string()))
            }
            None => (line, None),
        };
        let Some((lhs, rhs)) = body.split_once("->") else {
            return Err(Error::parse(line_no, "expected '->' between reactants and products"));
        };
        if rhs.contains("->") || lhs.contains(['<', '>', '=']) || rhs.contains(['<', '>', '=']) {
            return Err(Error::parse(line_no, "malformed arrow"));
        }
        let k = parse_side(lhs, line_no, &mut species, &mut index, fixed_species)?;
        let s = parse_side(rhs, line_no, &mut species, &mut index, fixed_species)?;
        raw.push((k, s, label));
    }
    if raw.is_empty() {
        return Err(Error::parse(0, "no reactions found"));
    }

    let p = species.len();
    let mut reactants = Vec::with_capacity(raw.len());
    let mut products = Vec::with_capacity(raw.len());
    let mut param_map = Vec::with_capacity(raw.len());
    let mut param_names: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let labelled: Vec<&str> = raw.iter().filter_map(|(_, _, l)| l.as_deref()).collect();
    for (j, (k, s, label)) in raw.iter().enumerate() {
        let mut kc = vec![0u32; p];
        let mut sc = vec![0u32; p];
        for &(l, c) in k {
            kc[l] += c;
        }
        for &(l, c) in s {
            sc[l] += c;
        }
        reactants.push(kc);
        products.push(sc);
        let name = match label {
            Some(l) => l.clone(),
            None => {
                let mut n = format!("beta{}", j + 1);
                while labelled.contains(&n.as_str()) || label_index.contains_key(&n) {
                    n.push('_');
                }
                n
            }
        };
        let m = *label_index.entry(name.clone()).or_insert_with(|| {
            param_names.push(name);
            param_names.len() - 1
        });
        param_map.push(m);
    }
    ReactionNetwork::new(species, reactants, products, Some(param_map))?.with_param_names(param_names)
}

/// SIR-style compartment network without susceptibles, per region `k`:
/// `I_k -> 2 I_k`, `I_k -> R_k`, `I_k -> D_k`.
///
/// Species are laid out `[I_k, R_k, D_k]` region by region. With `tied`
/// the recovery and death reactions of every region share one rate each;
/// parameters are then the region infection rates followed by the shared
/// recovery and death rates.
pub fn build_sir(regions: usize, tied: bool) -> Result<ReactionNetwork> {
    let names: Vec<String> = (1..=regions).map(|k| k.to_string()).collect();
    build_sir_named(&names, tied)
}

pub fn build_sir_named(regions: &[String], tied: bool) -> Result<ReactionNetwork> {
    let n = regions.len();
    if n == 0 {
        return Err(Error::InvalidArgument("SIR model needs at least one region".into()));
    }
    let p = 3 * n;
    let mut species = Vec::with_capacity(p);
    let mut reactants = Vec::with_capacity(p);
    let mut products = Vec::with_capacity(p);
    let mut labels = Vec::with_capacity(p);
    let mut param_map = Vec::with_capacity(p);
    for (k, region) in regions.iter().enumerate() {
        species.extend([format!("I_{region}"), format!("R_{region}"), format!("D_{region}")]);
        let (i, r, d) = (3 * k, 3 * k + 1, 3 * k + 2);
        for (label, product) in [("infect", (i, 2)), ("recover", (r, 1)), ("death", (d, 1))] {
            let mut kc = vec![0u32; p];
            let mut sc = vec![0u32; p];
            kc[i] = 1;
            sc[product.0] = product.1;
            reactants.push(kc);
            products.push(sc);
            labels.push(format!("{label}_{region}"));
        }
        if tied {
            param_map.extend([k, n, n + 1]);
        } else {
            param_map.extend([3 * k, 3 * k + 1, 3 * k + 2]);
        }
    }
    let param_names = if tied {
        let mut names: Vec<String> = regions.iter().map(|r| format!("infect_{r}")).collect();
        names.push("recover".into());
        names.push("death".into());
        names
    } else {
        labels.clone()
    };
    ReactionNetwork::new(species, reactants, products, Some(param_map))?
        .with_param_names(param_names)?
        .with_reaction_labels(labels)
}

/// Basic reproduction number `θ_infect / (θ_recover + θ_death)` per region of
/// a network built by [`build_sir`].
pub fn sir_r0(net: &ReactionNetwork, rates: &LogRates) -> Result<Vec<f64>> {
    let theta = net.reaction_rates(rates)?;
    if theta.len() % 3 != 0 {
        return Err(Error::Dimension("not an SIR compartment network".into()));
    }
    Ok(theta.chunks(3).map(|c| c[0] / (c[1] + c[2])).collect())
}

/// Observation times `t_0 < … < t_N` and species counts `Y_0 … Y_N`.
///
/// Counts are validated as nonnegative integers and stored as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    species: Vec<String>,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    /// A single observed row is accepted; estimators need `N ≥ 1` and
    /// check it themselves.
    pub fn new(species: Vec<String>, times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Dimension("trajectory needs at least one time point".into()));
        }
        if times.len() != states.len() {
            return Err(Error::Dimension(format!(
                "{} times but {} state rows",
                times.len(),
                states.len()
            )));
        }
        let p = species.len();
        for (i, (t, row)) in times.iter().zip(&states).enumerate() {
            if !t.is_finite() {
                return Err(Error::InvalidArgument(format!("time {i} is not finite")));
            }
            if i > 0 && !(*t > times[i - 1]) {
                return Err(Error::InvalidArgument(format!(
                    "times must be strictly increasing (row {i}: {} then {t})",
                    times[i - 1]
                )));
            }
            if row.len() != p {
                return Err(Error::Dimension(format!(
                    "row {i} has {} counts, expected {p}",
                    row.len()
                )));
            }
            if let Some((l, y)) = row
                .iter()
                .enumerate()
                .find(|(_, y)| !(**y >= 0.0) || y.fract() != 0.0 || !y.is_finite())
            {
                return Err(Error::InvalidArgument(format!(
                    "row {i}, species {}: count {y} is not a nonnegative integer",
                    species[l]
                )));
            }
        }
        Ok(Trajectory {
            species,
            times,
            states,
        })
    }

    /// Trajectory with species named after a network.
    pub fn for_network(net: &ReactionNetwork, times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        Trajectory::new(net.species().to_vec(), times, states)
    }

    /// Number of intervals `N`.
    pub fn n_intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    /// Length of interval `i` (1-based, `t_i - t_{i-1}`).
    pub fn dt(&self, i: usize) -> f64 {
        self.times[i] - self.times[i - 1]
    }

    /// `Y_i - Y_{i-1}` for interval `i` (1-based).
    pub fn increment(&self, i: usize) -> Vec<f64> {
        self.states[i]
            .iter()
            .zip(&self.states[i - 1])
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Keep the first `n` intervals.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n > self.n_intervals() {
            return Err(Error::InvalidArgument(format!(
                "cannot keep {n} intervals of {}",
                self.n_intervals()
            )));
        }
        Ok(Trajectory {
            species: self.species.clone(),
            times: self.times[..=n].to_vec(),
            states: self.states[..=n].to_vec(),
        })
    }

    /// Reorder columns to match the species order of `net`.
    pub fn aligned_to(&self, net: &ReactionNetwork) -> Result<Self> {
        if self.species == net.species() {
            return Ok(self.clone());
        }
        for name in &self.species {
            if !net.species().contains(name) {
                return Err(Error::Dimension(format!(
                    "trajectory column '{name}' is not a species of the model"
                )));
            }
        }
        let mut cols = Vec::with_capacity(net.n_species());
        for name in net.species() {
            match self.species.iter().position(|s| s == name) {
                Some(c) => cols.push(c),
                None => {
                    return Err(Error::Dimension(format!(
                        "model species '{name}' has no trajectory column"
                    )))
                }
            }
        }
        let states = self
            .states
            .iter()
            .map(|row| cols.iter().map(|&c| row[c]).collect())
            .collect();
        Ok(Trajectory {
            species: net.species().to_vec(),
            times: self.times.clone(),
            states,
        })
    }

    /// Error unless the trajectory has at least one interval and matches `net`.
    pub fn check_against(&self, net: &ReactionNetwork) -> Result<()> {
        if self.n_intervals() == 0 {
            return Err(Error::Dimension("trajectory needs at least two time points".into()));
        }
        if self.n_species() != net.n_species() {
            return Err(Error::Dimension(format!(
                "trajectory has {} species, network has {}",
                self.n_species(),
                net.n_species()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const CELL_DIFF: &str = "\
# cell differentiation system
species: A B C D
0 -> A
A -> 0
D -> 0
A -> 2 B
B -> 2 C
B -> 2 D
";

    fn cell_diff() -> ReactionNetwork {
        parse_network(CELL_DIFF).unwrap()
    }

    fn beta_true() -> LogRates {
        LogRates::new(vec![5.30, 1.10, -0.11, -0.22, -0.22, -1.61]).unwrap()
    }

    #[test]
    fn parses_printed_net_effect() {
        let net = cell_diff();
        let expected = DMatrix::from_row_slice(
            4,
            6,
            &[
                1., -1., 0., -1., 0., 0., //
                0., 0., 0., 2., -1., -1., //
                0., 0., 0., 0., 2., 0., //
                0., 0., -1., 0., 0., 2.,
            ],
        );
        assert_eq!(net.net_effect(), &expected);
        assert_eq!(net.param_map(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(net.reactant_matrix().column(0).sum(), 0);
    }

    #[test]
    fn hazard_examples() {
        let net = cell_diff();
        let y = [50.0, 100.0, 100.0, 200.0];
        let h = net.hazard(&beta_true(), &y).unwrap();
        assert_relative_eq!(h[0], 5.30_f64.exp(), max_relative = 1e-15);
        assert!((h[0] - 200.34).abs() < 0.01);
        assert!((h[3] - 40.13).abs() < 0.01);
        assert_relative_eq!(h[3], 50.0 * (-0.22_f64).exp(), max_relative = 1e-15);

        let mu = net.interval_rates(&beta_true(), &y, 0.5).unwrap();
        assert!((mu[0] - 100.17).abs() < 0.01);
        let unit = net.interval_rates(&beta_true(), &y, 1.0).unwrap();
        assert_eq!(unit, h);
        assert!(net.interval_rates(&beta_true(), &y, 0.0).is_err());
        assert!(net.hazard(&beta_true(), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn unmet_reactants_give_zero() {
        let net = parse_network("2 A + B -> C\nA -> B").unwrap();
        let rates = LogRates::new(vec![0.3, -1.0]).unwrap();
        let h = net.hazard(&rates, &[1.0, 5.0, 0.0]).unwrap();
        assert_eq!(h[0], 0.0);
        let mu = net.interval_rates(&rates, &[0.0, 0.0, 3.0], 2.0).unwrap();
        assert_eq!(mu, vec![0.0, 0.0]);
    }

    #[test]
    fn parse_forms_and_errors() {
        let net = parse_network("A + 2 B -> C @ beta1\n0 -> A @ beta1\n2B -> 0").unwrap();
        assert_eq!(net.species(), &["A", "B", "C"]);
        assert_eq!(net.param_map(), &[0, 0, 1]);
        assert_eq!(net.n_params(), 2);
        assert_eq!(net.reactant_column(0), &[1, 2, 0]);
        assert_eq!(net.reactant_column(2), &[0, 2, 0]);

        match parse_network("A -> B\nA => B") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_network("# c\nA -> B -> C") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_network("species: A\nA -> B").is_err());
        assert!(parse_network("A + -> B").is_err());
        assert!(parse_network("").is_err());
    }

    #[test]
    fn text_roundtrip() {
        let net = build_sir(2, true).unwrap();
        let back = parse_network(&net.to_text()).unwrap();
        assert_eq!(back.net_effect(), net.net_effect());
        assert_eq!(back.species(), net.species());
        let tied_names = |n: &ReactionNetwork| -> Vec<String> {
            n.param_map().iter().map(|&m| n.param_names()[m].clone()).collect()
        };
        assert_eq!(tied_names(&back), tied_names(&net));
    }

    #[test]
    fn sir_builders() {
        let b = build_sir(21, false).unwrap();
        assert_eq!((b.n_species(), b.n_reactions(), b.n_params()), (63, 63, 63));
        let one = build_sir(1, true).unwrap();
        assert_eq!(one.n_params(), 3);
        let two = build_sir(2, true).unwrap();
        assert_eq!(two.n_params(), 4);
        assert_eq!(two.param_map(), &[0, 2, 3, 1, 2, 3]);
        assert!(build_sir(0, true).is_err());

        let rates = LogRates::new(vec![0.3f64.ln(), 0.1f64.ln(), 0.05f64.ln()]).unwrap();
        let r0 = sir_r0(&one, &rates).unwrap();
        assert_relative_eq!(r0[0], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn constructor_rejects_bad_maps() {
        let k = vec![vec![1u32], vec![1]];
        let s = vec![vec![0u32], vec![2]];
        assert!(ReactionNetwork::new(vec!["A".into()], k.clone(), s.clone(), Some(vec![0, 2])).is_err());
        assert!(ReactionNetwork::new(vec!["A".into()], k.clone(), s.clone(), Some(vec![0])).is_err());
        assert!(ReactionNetwork::new(vec!["A".into()], k, vec![vec![0u32]], None).is_err());
    }

    #[test]
    fn large_binomials() {
        assert_relative_eq!(binomial(1e9, 2), 1e9 * (1e9 - 1.0) / 2.0, max_relative = 1e-15);
        let c = binomial(1e9, 25);
        let direct: f64 = (0..25).map(|i| (1e9 - i as f64) / (i as f64 + 1.0)).product();
        assert_relative_eq!(c, direct, max_relative = 1e-9);
        assert_eq!(binomial(3.0, 25), 0.0);
    }

    #[test]
    fn trajectory_validation_and_alignment() {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(Trajectory::new(names(&["A"]), vec![0.0, 0.0], vec![vec![1.0], vec![2.0]]).is_err());
        assert!(Trajectory::new(names(&["A"]), vec![0.0, 1.0], vec![vec![1.0], vec![2.5]]).is_err());
        assert!(Trajectory::new(names(&["A"]), vec![0.0, 1.0], vec![vec![1.0], vec![-1.0]]).is_err());
        let t = Trajectory::new(
            names(&["B", "A"]),
            vec![0.0, 0.5, 2.0],
            vec![vec![1.0, 10.0], vec![2.0, 9.0], vec![4.0, 9.0]],
        )
        .unwrap();
        assert_eq!(t.n_intervals(), 2);
        assert_eq!(t.increment(1), vec![1.0, -1.0]);
        assert_eq!(t.dt(2), 1.5);
        let net = parse_network("A -> B").unwrap();
        let a = t.aligned_to(&net).unwrap();
        assert_eq!(a.state(2), &[9.0, 4.0]);
        let other = parse_network("A -> C").unwrap();
        let err = t.aligned_to(&other).unwrap_err().to_string();
        assert!(err.contains("'B'"), "{err}");
        assert_eq!(t.truncate(1).unwrap().n_intervals(), 1);
    }

    proptest! {
        #[test]
        fn hazard_homogeneous_in_rates(
            beta in proptest::collection::vec(-3.0f64..3.0, 6),
            shift in -2.0f64..2.0,
            m in 0usize..6,
            y in proptest::collection::vec(0u32..300, 4),
        ) {
            let net = cell_diff();
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            let base = net.hazard(&LogRates::new(beta.clone()).unwrap(), &y).unwrap();
            let mut moved = beta.clone();
            moved[m] += shift;
            let after = net.hazard(&LogRates::new(moved).unwrap(), &y).unwrap();
            for j in 0..6 {
                let factor = if net.param_map()[j] == m { shift.exp() } else { 1.0 };
                prop_assert!((after[j] - base[j] * factor).abs() <= 1e-13 * after[j].abs().max(1e-300));
            }
        }

        #[test]
        fn mass_action_matches_plain_product(
            beta in proptest::collection::vec(-3.0f64..3.0, 3),
            y in proptest::collection::vec(0u32..10_000, 3),
        ) {
            let net = parse_network("A + B -> C\nA -> 0\nA + B + C -> 0").unwrap();
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            let h = net.hazard(&LogRates::new(beta.clone()).unwrap(), &y).unwrap();
            prop_assert_eq!(h[0], beta[0].exp() * (y[0] * y[1]));
            prop_assert_eq!(h[1], beta[1].exp() * y[0]);
            prop_assert_eq!(h[2], beta[2].exp() * (y[0] * y[1] * y[2]));
        }
    }
}
