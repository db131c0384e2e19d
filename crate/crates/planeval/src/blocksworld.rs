//! The built-in Blocksworld domain, a uniform random instance sampler, a
//! breadth-first oracle planner, and deterministic suite generation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{
    all_ground_actions, ground, satisfies, ActionSchema, Domain, GroundAction, GroundAtom,
    InvalidSymbol, Plan, Problem, SchemaAtom, State, Symbol,
};

pub const DOMAIN_NAME: &str = "blocksworld";
pub const MIN_BLOCKS: usize = 2;
pub const MAX_BLOCKS: usize = 8;

/// The four-operator Blocksworld domain over predicates `on`, `ontable`,
/// `clear`, `holding`, and `handempty`.
pub fn domain() -> Domain {
    let s = |t: &str| Symbol::new(t).expect("static name");
    let atom = |p: &str, args: &[&str]| SchemaAtom::new(s(p), args.iter().map(|a| s(a)).collect());
    let atoms = |list: &[(&str, &[&str])]| -> BTreeSet<SchemaAtom> {
        list.iter().map(|(p, args)| atom(p, args)).collect()
    };

    let pickup = ActionSchema {
        name: s("pickup"),
        params: vec![s("x")],
        precondition: atoms(&[("clear", &["x"]), ("ontable", &["x"]), ("handempty", &[])]),
        add: atoms(&[("holding", &["x"])]),
        del: atoms(&[("clear", &["x"]), ("ontable", &["x"]), ("handempty", &[])]),
    };
    let putdown = ActionSchema {
        name: s("putdown"),
        params: vec![s("x")],
        precondition: atoms(&[("holding", &["x"])]),
        add: atoms(&[("clear", &["x"]), ("handempty", &[]), ("ontable", &["x"])]),
        del: atoms(&[("holding", &["x"])]),
    };
    let stack = ActionSchema {
        name: s("stack"),
        params: vec![s("x"), s("y")],
        precondition: atoms(&[("holding", &["x"]), ("clear", &["y"])]),
        add: atoms(&[("clear", &["x"]), ("handempty", &[]), ("on", &["x", "y"])]),
        del: atoms(&[("holding", &["x"]), ("clear", &["y"])]),
    };
    let unstack = ActionSchema {
        name: s("unstack"),
        params: vec![s("x"), s("y")],
        precondition: atoms(&[("on", &["x", "y"]), ("clear", &["x"]), ("handempty", &[])]),
        add: atoms(&[("holding", &["x"]), ("clear", &["y"])]),
        del: atoms(&[("on", &["x", "y"]), ("clear", &["x"]), ("handempty", &[])]),
    };

    Domain::new(
        s(DOMAIN_NAME),
        [
            (s("on"), 2),
            (s("ontable"), 1),
            (s("clear"), 1),
            (s("holding"), 1),
            (s("handempty"), 0),
        ],
        [pickup, putdown, stack, unstack],
    )
    .expect("the static blocksworld domain is valid")
}

/// Block names `a`, `b`, ... for an instance of `n` blocks.
pub fn block_names(n: usize) -> Vec<Symbol> {
    (0..n)
        .map(|i| {
            let letter = (b'a' + (i % 26) as u8) as char;
            let name = if i < 26 {
                letter.to_string()
            } else {
                format!("{letter}{}", i / 26)
            };
            Symbol::new(&name).expect("generated block name is valid")
        })
        .collect()
}

/// A structured Blocksworld configuration: towers of blocks listed bottom
/// to top, plus at most one held block.
///
/// Towers are kept sorted by their bottom block, so two values compare equal
/// exactly when they describe the same physical configuration.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlocksState {
    towers: Vec<Vec<Symbol>>,
    held: Option<Symbol>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlocksStateError {
    #[error("tower {0} is empty")]
    EmptyTower(usize),
    #[error("block `{0}` appears more than once")]
    DuplicateBlock(Symbol),
    #[error("atom `{0}` is not a blocksworld atom")]
    ForeignAtom(GroundAtom),
    #[error("the hand both holds `{0}` and is empty")]
    HeldConflict(Symbol),
    #[error("the hand holds both `{0}` and `{1}`")]
    MultipleHeld(Symbol, Symbol),
    #[error("neither `(handempty)` nor a `holding` atom is present")]
    MissingHandAtom,
    #[error("two blocks sit directly on `{0}`")]
    MultipleOn(Symbol),
    #[error("block `{0}` sits on two different supports")]
    MultipleSupports(Symbol),
    #[error("block `{0}` has no support (not on the table, on a block, or held)")]
    Unsupported(Symbol),
    #[error("`clear` atoms do not match the tower structure at block `{0}`")]
    ClearMismatch(Symbol),
    #[error("the `on` atoms contain a cycle or a tower not grounded on the table")]
    Cycle,
}

impl BlocksState {
    /// Builds a configuration from towers (bottom block first) and an
    /// optional held block, rejecting empty towers and duplicate blocks.
    pub fn new(towers: Vec<Vec<Symbol>>, held: Option<Symbol>) -> Result<Self, BlocksStateError> {
        let mut seen = BTreeSet::new();
        for (i, tower) in towers.iter().enumerate() {
            if tower.is_empty() {
                return Err(BlocksStateError::EmptyTower(i));
            }
            for block in tower {
                if !seen.insert(block.clone()) {
                    return Err(BlocksStateError::DuplicateBlock(block.clone()));
                }
            }
        }
        if let Some(block) = &held {
            if !seen.insert(block.clone()) {
                return Err(BlocksStateError::DuplicateBlock(block.clone()));
            }
        }
        let mut towers = towers;
        towers.sort();
        Ok(BlocksState { towers, held })
    }

    pub fn towers(&self) -> &[Vec<Symbol>] {
        &self.towers
    }

    pub fn held(&self) -> Option<&Symbol> {
        self.held.as_ref()
    }

    pub fn blocks(&self) -> BTreeSet<Symbol> {
        self.towers
            .iter()
            .flatten()
            .chain(self.held.iter())
            .cloned()
            .collect()
    }

    /// Renders the configuration as the equivalent set of ground atoms.
    pub fn to_state(&self) -> State {
        let s = |t: &str| Symbol::new(t).expect("static name");
        let mut atoms = Vec::new();
        for tower in &self.towers {
            atoms.push(GroundAtom::new(s("ontable"), vec![tower[0].clone()]));
            for pair in tower.windows(2) {
                atoms.push(GroundAtom::new(s("on"), vec![pair[1].clone(), pair[0].clone()]));
            }
            let top = tower.last().expect("towers are nonempty");
            atoms.push(GroundAtom::new(s("clear"), vec![top.clone()]));
        }
        match &self.held {
            Some(block) => atoms.push(GroundAtom::new(s("holding"), vec![block.clone()])),
            None => atoms.push(GroundAtom::new(s("handempty"), Vec::new())),
        }
        State::from_atoms(atoms)
    }

    /// Reconstructs a configuration from a state, verifying that the atoms
    /// describe a physically consistent arrangement. Inverse of
    /// [`BlocksState::to_state`] on consistent states.
    pub fn from_state(state: &State) -> Result<Self, BlocksStateError> {
        let mut ontable = BTreeSet::new();
        let mut clear = BTreeSet::new();
        let mut above: BTreeMap<Symbol, Symbol> = BTreeMap::new();
        let mut supported: BTreeSet<Symbol> = BTreeSet::new();
        let mut held: Option<Symbol> = None;
        let mut handempty = false;
        let mut blocks = BTreeSet::new();

        for atom in state.atoms() {
            blocks.extend(atom.args.iter().cloned());
            match (atom.predicate.as_str(), atom.args.as_slice()) {
                ("ontable", [x]) => {
                    if !supported.insert(x.clone()) {
                        return Err(BlocksStateError::MultipleSupports(x.clone()));
                    }
                    ontable.insert(x.clone());
                }
                ("clear", [x]) => {
                    clear.insert(x.clone());
                }
                ("on", [x, y]) => {
                    if !supported.insert(x.clone()) {
                        return Err(BlocksStateError::MultipleSupports(x.clone()));
                    }
                    if above.insert(y.clone(), x.clone()).is_some() {
                        return Err(BlocksStateError::MultipleOn(y.clone()));
                    }
                }
                ("holding", [x]) => match &held {
                    Some(other) => {
                        return Err(BlocksStateError::MultipleHeld(other.clone(), x.clone()))
                    }
                    None => held = Some(x.clone()),
                },
                ("handempty", []) => handempty = true,
                _ => return Err(BlocksStateError::ForeignAtom(atom.clone())),
            }
        }

        match (&held, handempty) {
            (Some(block), true) => return Err(BlocksStateError::HeldConflict(block.clone())),
            (None, false) => return Err(BlocksStateError::MissingHandAtom),
            _ => {}
        }
        if let Some(block) = &held {
            if supported.contains(block) {
                return Err(BlocksStateError::MultipleSupports(block.clone()));
            }
            if clear.contains(block) || above.contains_key(block) {
                return Err(BlocksStateError::ClearMismatch(block.clone()));
            }
        }

        // Follow each table block upward; every block must be visited
        // exactly once, which rules out cycles and floating sub-towers.
        let mut towers = Vec::new();
        let mut visited = BTreeSet::new();
        for bottom in &ontable {
            let mut tower = vec![bottom.clone()];
            visited.insert(bottom.clone());
            let mut top = bottom.clone();
            while let Some(next) = above.get(&top) {
                if !visited.insert(next.clone()) {
                    return Err(BlocksStateError::Cycle);
                }
                tower.push(next.clone());
                top = next.clone();
            }
            if !clear.contains(&top) {
                return Err(BlocksStateError::ClearMismatch(top.clone()));
            }
            towers.push(tower);
        }

        for block in &blocks {
            if !visited.contains(block) && held.as_ref() != Some(block) {
                return Err(BlocksStateError::Unsupported(block.clone()));
            }
        }
        // Every clear block must be the top of some tower.
        for block in &clear {
            let is_top = towers.iter().any(|t| t.last() == Some(block));
            if !is_top {
                return Err(BlocksStateError::ClearMismatch(block.clone()));
            }
        }

        BlocksState::new(towers, held)
    }
}

/// Everything needed to regenerate one instance deterministically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: String,
    pub n_blocks: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("block count {0} is outside the supported range {MIN_BLOCKS}..={MAX_BLOCKS}")]
    BlockCount(usize),
    #[error("instance id is not a valid problem name: {0}")]
    BadId(#[from] InvalidSymbol),
    #[error(
        "a suite of {requested} distinct instances is impossible with {n_blocks} blocks \
         (only {available} ordered init/goal pairs exist)"
    )]
    SuiteTooLarge {
        requested: usize,
        n_blocks: usize,
        available: u128,
    },
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of configurations of `n` distinct blocks with exactly `k` towers:
/// the Lah number C(n-1, k-1) * n! / k!.
fn configurations_with_towers(n: usize, k: usize) -> u128 {
    binomial(n - 1, k - 1) * factorial(n) / factorial(k)
}

/// Total number of hand-empty configurations of `n` distinct blocks.
pub fn configuration_count(n: usize) -> u128 {
    (1..=n).map(|k| configurations_with_towers(n, k)).sum()
}

/// Draws a hand-empty configuration uniformly at random.
///
/// The tower count k is drawn with probability proportional to the number of
/// configurations with k towers; a uniform permutation split at a uniform
/// choice of k-1 cut positions then yields each such configuration with
/// equal probability (each one arises from exactly k! permutation/cut pairs).
fn sample_configuration(blocks: &[Symbol], rng: &mut ChaCha8Rng) -> BlocksState {
    let n = blocks.len();
    let weights: Vec<u128> = (1..=n).map(|k| configurations_with_towers(n, k)).collect();
    let total: u128 = weights.iter().sum();
    let mut draw = rng.gen_range(0..total);
    let mut k = n;
    for (i, &w) in weights.iter().enumerate() {
        if draw < w {
            k = i + 1;
            break;
        }
        draw -= w;
    }

    let mut perm = blocks.to_vec();
    perm.shuffle(rng);

    let mut positions: Vec<usize> = (1..n).collect();
    let (chosen, _) = positions.partial_shuffle(rng, k - 1);
    let mut cuts = chosen.to_vec();
    cuts.sort_unstable();
    cuts.push(n);

    let mut towers = Vec::with_capacity(k);
    let mut start = 0;
    for cut in cuts {
        towers.push(perm[start..cut].to_vec());
        start = cut;
    }
    BlocksState::new(towers, None).expect("sampled towers are nonempty and disjoint")
}

/// Generates one random instance: a uniform initial configuration and a
/// uniform goal configuration resampled until it differs from the initial
/// one. The goal keeps only the `on`/`ontable` atoms, which pin down the
/// configuration completely.
pub fn random_instance(spec: &InstanceSpec) -> Result<Problem, InstanceError> {
    if !(MIN_BLOCKS..=MAX_BLOCKS).contains(&spec.n_blocks) {
        return Err(InstanceError::BlockCount(spec.n_blocks));
    }
    let name = Symbol::new(&spec.id)?;
    let blocks = block_names(spec.n_blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let init = sample_configuration(&blocks, &mut rng);
    let goal = loop {
        let candidate = sample_configuration(&blocks, &mut rng);
        if candidate != init {
            break candidate;
        }
    };

    let goal_atoms: Vec<GroundAtom> = goal
        .to_state()
        .atoms()
        .filter(|a| matches!(a.predicate.as_str(), "on" | "ontable"))
        .cloned()
        .collect();
    let problem = Problem::new(name, &domain(), blocks, init.to_state(), goal_atoms)
        .expect("generated instances are valid by construction");
    Ok(problem)
}

/// Generates `count` distinct instances from one master seed. Instance seeds
/// are drawn from the master stream; duplicates (same init and goal) are
/// skipped without consuming an id, so ids are always `bw<n>-001 ...` with
/// no gaps.
pub fn generate_suite(
    count: usize,
    n_blocks: usize,
    master_seed: u64,
) -> Result<Vec<(InstanceSpec, Problem)>, InstanceError> {
    if !(MIN_BLOCKS..=MAX_BLOCKS).contains(&n_blocks) {
        return Err(InstanceError::BlockCount(n_blocks));
    }
    let configurations = configuration_count(n_blocks);
    let available = configurations * (configurations - 1);
    if count as u128 > available {
        return Err(InstanceError::SuiteTooLarge {
            requested: count,
            n_blocks,
            available,
        });
    }

    let mut master = ChaCha8Rng::seed_from_u64(master_seed);
    let mut seen: BTreeSet<(State, BTreeSet<GroundAtom>)> = BTreeSet::new();
    let mut suite = Vec::with_capacity(count);
    while suite.len() < count {
        let spec = InstanceSpec {
            id: format!("bw{}-{:03}", n_blocks, suite.len() + 1),
            n_blocks,
            seed: master.next_u64(),
        };
        let problem = random_instance(&spec)?;
        let key = (problem.init().clone(), problem.goal().clone());
        if seen.insert(key) {
            suite.push((spec, problem));
        }
    }
    Ok(suite)
}

/// Breadth-first search for a shortest plan, expanding ground actions in
/// lexicographic `(name, args)` order so results are deterministic. Returns
/// `None` if no plan of length at most `max_depth` exists.
pub fn bfs_plan(domain: &Domain, problem: &Problem, max_depth: usize) -> Option<Plan> {
    let objects: Vec<Symbol> = problem.objects().cloned().collect();
    let operators: Vec<_> = all_ground_actions(domain, &objects)
        .into_iter()
        .map(|action| {
            let op = ground(domain, &action).expect("enumerated actions ground");
            (action, op)
        })
        .collect();

    let start = problem.init().clone();
    if satisfies(&start, problem.goal()).0 {
        return Some(Plan::default());
    }

    let mut parents: HashMap<State, (State, GroundAction)> = HashMap::new();
    let mut seen: HashSet<State> = HashSet::from([start.clone()]);
    let mut queue: VecDeque<(State, usize)> = VecDeque::from([(start, 0)]);

    while let Some((state, depth)) = queue.pop_front() {
        if depth == max_depth {
            continue;
        }
        for (action, op) in &operators {
            if !op.precondition.iter().all(|a| state.contains(a)) {
                continue;
            }
            let next = State::from_atoms(
                state
                    .atoms()
                    .filter(|a| !op.del.contains(a))
                    .cloned()
                    .chain(op.add.iter().cloned()),
            );
            if !seen.insert(next.clone()) {
                continue;
            }
            parents.insert(next.clone(), (state.clone(), action.clone()));
            if satisfies(&next, problem.goal()).0 {
                let mut steps = Vec::new();
                let mut at = &next;
                while let Some((prev, action)) = parents.get(at) {
                    steps.push(action.clone());
                    at = prev;
                }
                steps.reverse();
                return Some(Plan::new(steps));
            }
            queue.push_back((next, depth + 1));
        }
    }
    None
}

/// Manifest of a generated suite, written next to the domain and problem
/// files so a run can be reproduced or resumed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub n_blocks: usize,
    pub count: usize,
    pub master_seed: u64,
    pub domain_file: String,
    pub instances: Vec<SuiteEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub id: String,
    pub seed: u64,
    pub n_blocks: usize,
    pub problem_file: String,
}

impl SuiteEntry {
    pub fn spec(&self) -> InstanceSpec {
        InstanceSpec {
            id: self.id.clone(),
            n_blocks: self.n_blocks,
            seed: self.seed,
        }
    }
}
