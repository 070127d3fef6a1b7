//! Exhaustive orbit enumeration, independent of the canonical-form
//! reduction: every free pair is scanned, reduced to its submodule key, and
//! the keys are joined into orbits by applying the elementary generators of
//! `GL_2(T_n)` until closure.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::canonical::{canonicalize, is_canonical, reduce_to_normal_form, verify_certificate};
use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::gl2::{gl2_generators, GL2Element};
use crate::modpairs::{pair_count, submodule_key, ModulePair, Submodule};
use crate::partitions::bell;
use crate::trimat::{packed_len, LowerTriMatrix};

fn check_budget(n: usize, field: PrimeField, budget: u128) -> Result<u64> {
    let needed = pair_count(n, field);
    if needed > budget || needed > u64::MAX as u128 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    Ok(needed as u64)
}

/// Codes of the distinct submodule keys, sorted, and the number of free
/// pairs seen.
fn scan_keys(n: usize, field: PrimeField, budget: u128) -> Result<(Vec<u64>, u64)> {
    let total = check_budget(n, field, budget)?;
    let per_chunk = 1u64 << 14;
    let chunks = total.div_ceil(per_chunk);
    let mut parts: Vec<(Vec<u64>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut keys = Vec::new();
            let mut free = 0u64;
            for code in c * per_chunk..((c + 1) * per_chunk).min(total) {
                let x = ModulePair::from_code(n, field, code);
                if x.is_free() {
                    free += 1;
                    keys.push(submodule_key(&x).code());
                }
            }
            keys.sort_unstable();
            keys.dedup();
            (keys, free)
        })
        .collect();
    let free = parts.iter().map(|p| p.1).sum();
    let mut keys: Vec<u64> = parts.iter_mut().flat_map(|p| std::mem::take(&mut p.0)).collect();
    keys.sort_unstable();
    keys.dedup();
    Ok((keys, free))
}

/// Keys of every free cyclic submodule of `²T_n`, sorted by the pair order.
pub fn enumerate_free_submodules(n: usize, field: PrimeField, budget: u128) -> Result<Vec<Submodule>> {
    let (codes, _) = scan_keys(n, field, budget)?;
    let mut keys: Vec<ModulePair> = codes.into_iter().map(|c| ModulePair::from_code(n, field, c)).collect();
    keys.sort();
    Ok(keys.into_iter().map(cyclic_key).collect())
}

fn cyclic_key(key: ModulePair) -> Submodule {
    crate::modpairs::cyclic_submodule(&key).expect("keys of free pairs are free")
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // the smaller index wins so roots do not depend on merge order
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

/// Orbits as groups of key codes, each group sorted, groups ordered by
/// their least code.
fn orbits_of(n: usize, field: PrimeField, keys: &[u64], gens: &[GL2Element]) -> Vec<Vec<u64>> {
    let index: HashMap<u64, usize> = keys.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let edges: Vec<(usize, usize)> = keys
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, &c)| {
            let x = ModulePair::from_code(n, field, c);
            gens.iter()
                .map(|g| {
                    let k = submodule_key(&g.act_right(&x).expect("same dimensions")).code();
                    (i, *index.get(&k).expect("generators preserve freeness"))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut uf = UnionFind::new(keys.len());
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut groups: Vec<Vec<u64>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (i, &c) in keys.iter().enumerate() {
        let r = uf.find(i);
        let s = *slot.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[s].push(c);
    }
    groups
}

/// One orbit of free cyclic submodules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrbitSummary {
    /// Number of submodules in the orbit.
    pub size: u64,
    /// Least submodule key of the orbit.
    pub representative: ModulePair,
    /// The canonical member, when there is exactly one.
    pub canonical_member: Option<ModulePair>,
    pub canonical_count: u64,
    /// Every member is generated by a unimodular pair.
    pub unimodular: bool,
    /// Common normal form of the orbit under the row-by-row reduction.
    pub normal_form: ModulePair,
}

/// Pass/fail per claim; `None` when the mode cannot decide it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Verdicts {
    /// (i) the number of orbits is the Bell number.
    pub orbit_count_is_bell: Option<bool>,
    /// (ii) every orbit holds exactly one canonical submodule.
    pub unique_canonical_member: Option<bool>,
    /// (iii) canonicalization lands in the input's orbit, on its canonical
    /// member, with a valid certificate.
    pub canonicalization_consistent: Option<bool>,
    /// (iv) exactly one orbit is unimodular, the one of `(I, 0)`.
    pub single_unimodular_orbit: Option<bool>,
    /// (v) every pair outside that orbit generates a free submodule as an
    /// outlier.
    pub others_are_outliers: Option<bool>,
}

impl Verdicts {
    fn all(&self) -> [(&'static str, Option<bool>); 5] {
        [
            ("orbit count equals Bell(n)", self.orbit_count_is_bell),
            ("one canonical submodule per orbit", self.unique_canonical_member),
            ("canonicalization consistent", self.canonicalization_consistent),
            ("single unimodular orbit at (I,0)", self.single_unimodular_orbit),
            ("other orbits are outliers", self.others_are_outliers),
        ]
    }
}

/// A pair witnessing a failed verdict.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub verdict: String,
    pub pair: ModulePair,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrbitReport {
    pub n: usize,
    pub p: u32,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Free pairs examined: all of them, or the sample size.
    pub total_free_pairs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_free_submodules: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbit_count: Option<u64>,
    pub bell: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub orbits: Vec<OrbitSummary>,
    pub verdicts: Verdicts,
    /// Inputs for which canonicalization reported an orbit without a
    /// canonical member.
    pub canonicalization_failures: u64,
    /// Inputs that needed the residual row-by-row reduction.
    pub residual_activations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

impl OrbitReport {
    /// True when every decided verdict passed.
    pub fn passed(&self) -> bool {
        self.verdicts.all().iter().all(|(_, v)| v.unwrap_or(true))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mode = match self.mode {
            Mode::Exhaustive => "exhaustive".to_string(),
            Mode::Sampled => format!("sampled, seed {}", self.seed.unwrap_or_default()),
        };
        out.push_str(&format!("n = {}, p = {} ({mode})\n", self.n, self.p));
        out.push_str(&format!("free pairs          {}\n", self.total_free_pairs));
        if let Some(s) = self.total_free_submodules {
            out.push_str(&format!("free submodules     {s}\n"));
        }
        if let Some(c) = self.orbit_count {
            out.push_str(&format!("orbits              {c}\n"));
        }
        out.push_str(&format!("Bell(n)             {}\n", self.bell));
        out.push_str(&format!("residual reductions {}\n", self.residual_activations));
        out.push_str(&format!("failed reductions   {}\n", self.canonicalization_failures));
        if !self.orbits.is_empty() {
            out.push_str("\n  #      size  canon  unimod  normal form\n");
            for (i, o) in self.orbits.iter().enumerate() {
                out.push_str(&format!(
                    "{:>3} {:>9} {:>6} {:>7}  {}\n",
                    i + 1,
                    o.size,
                    o.canonical_count,
                    if o.unimodular { "yes" } else { "no" },
                    compact(&o.normal_form)
                ));
            }
        }
        out.push('\n');
        for (name, v) in self.verdicts.all() {
            let s = match v {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "n/a",
            };
            out.push_str(&format!("{s:<5} {name}\n"));
        }
        if let Some(c) = &self.counterexample {
            out.push_str(&format!("\ncounterexample ({}): {}\n{}\n", c.verdict, c.detail, c.pair.to_pair_file()));
        }
        out
    }
}

impl fmt::Display for OrbitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// `A=rows;… B=rows;…` on one line.
fn compact(x: &ModulePair) -> String {
    let m = |t: &LowerTriMatrix| {
        t.to_rows().iter().map(|r| r.iter().map(|e| e.to_string()).collect::<String>()).collect::<Vec<_>>().join("/")
    };
    format!("A={} B={}", m(x.a()), m(x.b()))
}

/// Orbit decomposition of the free cyclic submodules of `²T_n`, without
/// the canonicalization checks.
pub fn orbit_decomposition(n: usize, field: PrimeField, budget: u128) -> Result<OrbitReport> {
    orbit_decomposition_with(n, field, budget, &gl2_generators(n, field))
}

/// [`orbit_decomposition`] with an explicit generator list.
pub fn orbit_decomposition_with(
    n: usize,
    field: PrimeField,
    budget: u128,
    generators: &[GL2Element],
) -> Result<OrbitReport> {
    decompose(n, field, budget, generators).map(|(r, _)| r)
}

fn decompose(n: usize, field: PrimeField, budget: u128, generators: &[GL2Element]) -> Result<(OrbitReport, Vec<Vec<u64>>)> {
    let (keys, free) = scan_keys(n, field, budget)?;
    let mut groups = orbits_of(n, field, &keys, generators);
    let orbits: Vec<OrbitSummary> = groups
        .par_iter()
        .map(|g| {
            let members: Vec<ModulePair> = g.iter().map(|&c| ModulePair::from_code(n, field, c)).collect();
            let canon: Vec<&ModulePair> = members.iter().filter(|m| is_canonical(m)).collect();
            let representative = members.iter().min().expect("orbits are nonempty").clone();
            let (normal_form, _) = reduce_to_normal_form(&representative).expect("free");
            OrbitSummary {
                size: g.len() as u64,
                canonical_member: (canon.len() == 1).then(|| canon[0].clone()),
                canonical_count: canon.len() as u64,
                unimodular: members.iter().all(|m| m.is_unimodular()),
                representative,
                normal_form,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..orbits.len()).collect();
    order.sort_by(|&a, &b| orbits[a].representative.cmp(&orbits[b].representative));
    let orbits: Vec<OrbitSummary> = order.iter().map(|&i| orbits[i].clone()).collect();
    groups = order.iter().map(|&i| std::mem::take(&mut groups[i])).collect();

    let bell_n = bell(n);
    let mut verdicts = Verdicts::default();
    let mut counterexample = None;
    let fail = |slot: &mut Option<Counterexample>, verdict: &str, pair: &ModulePair, detail: String| {
        if slot.is_none() {
            *slot = Some(Counterexample { verdict: verdict.into(), pair: pair.clone(), detail });
        }
    };

    let count_ok = num_bigint::BigUint::from(orbits.len()) == bell_n;
    verdicts.orbit_count_is_bell = Some(count_ok);
    if !count_ok {
        if let Some(o) = orbits.iter().find(|o| o.canonical_count == 0) {
            let detail = format!("{} orbits; this one has no canonical member", orbits.len());
            fail(&mut counterexample, "orbit count", &o.representative, detail);
        }
    }
    let unique = orbits.iter().all(|o| o.canonical_count == 1);
    verdicts.unique_canonical_member = Some(unique);
    if let Some(o) = orbits.iter().find(|o| o.canonical_count != 1) {
        let detail = format!("orbit with {} canonical members", o.canonical_count);
        fail(&mut counterexample, "unique canonical member", &o.representative, detail);
    }

    let identity_key = submodule_key(&ModulePair::identity_pair(n, field));
    let unimodular: Vec<&OrbitSummary> = orbits.iter().filter(|o| o.unimodular).collect();
    let single = unimodular.len() == 1 && groups_contain(&groups, &unimodular[0].representative, &identity_key);
    verdicts.single_unimodular_orbit = Some(single);
    if !single {
        let pair = unimodular.get(1).map_or(&identity_key, |o| &o.representative);
        fail(&mut counterexample, "single unimodular orbit", pair, format!("{} unimodular orbits", unimodular.len()));
    }
    // a mixed orbit would break (v)
    let mixed = orbits.par_iter().zip(groups.par_iter()).find_map_first(|(o, g)| {
        if o.unimodular {
            return None;
        }
        g.iter().map(|&c| ModulePair::from_code(n, field, c)).filter(|m| !m.is_outlier_generating_free()).min()
    });
    verdicts.others_are_outliers = Some(mixed.is_none());
    if let Some(m) = mixed {
        fail(&mut counterexample, "others are outliers", &m, "unimodular pair outside the unimodular orbit".into());
    }

    let report = OrbitReport {
        n,
        p: field.modulus(),
        mode: Mode::Exhaustive,
        seed: None,
        total_free_pairs: free,
        total_free_submodules: Some(keys.len() as u64),
        orbit_count: Some(orbits.len() as u64),
        bell: bell_n.to_string(),
        orbits,
        verdicts,
        canonicalization_failures: 0,
        residual_activations: 0,
        counterexample,
    };
    Ok((report, groups))
}

fn groups_contain(groups: &[Vec<u64>], rep: &ModulePair, key: &ModulePair) -> bool {
    let (r, k) = (rep.code(), key.code());
    groups.iter().any(|g| g.binary_search(&r).is_ok() && g.binary_search(&k).is_ok())
}

/// What went wrong when one input was canonicalized.
enum Trouble {
    Failed(ModulePair),
    Unsound(ModulePair, String),
}

struct Tally {
    failures: u64,
    residual: u64,
    trouble: Option<(u64, Trouble)>,
}

impl Tally {
    fn empty() -> Self {
        Tally { failures: 0, residual: 0, trouble: None }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.failures += other.failures;
        self.residual += other.residual;
        self.trouble = match (self.trouble, other.trouble) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }

    fn note(&mut self, code: u64, t: Trouble) {
        if self.trouble.as_ref().is_none_or(|(c, _)| code < *c) {
            self.trouble = Some((code, t));
        }
    }
}

/// Canonicalizes `x` and checks the output; `expected` is the canonical
/// member the output must equal, when known.
fn check_one(x: &ModulePair, expected: impl Fn(&ModulePair) -> std::result::Result<(), String>) -> Tally {
    let mut t = Tally::empty();
    let code = x.code();
    match canonicalize(x) {
        Ok(c) => {
            if !c.trace.residual_activations.is_empty() {
                t.residual += 1;
            }
            let problem = if !is_canonical(&c.canonical) {
                Some("output is not canonical".to_string())
            } else if !verify_certificate(x, &c.canonical, &c.certificate) {
                Some("certificate does not verify".to_string())
            } else {
                expected(&c.canonical).err()
            };
            if let Some(p) = problem {
                t.note(code, Trouble::Unsound(x.clone(), p));
            }
        }
        Err(Error::CanonicalizationFailed { .. }) => {
            t.failures += 1;
            t.residual += 1;
            t.note(code, Trouble::Failed(x.clone()));
        }
        Err(e) => t.note(code, Trouble::Unsound(x.clone(), e.to_string())),
    }
    t
}

fn record(report: &mut OrbitReport, tally: Tally) {
    report.canonicalization_failures = tally.failures;
    report.residual_activations = tally.residual;
    let ok = tally.trouble.is_none();
    report.verdicts.canonicalization_consistent = Some(ok);
    if let Some((_, t)) = tally.trouble {
        let (pair, detail) = match t {
            Trouble::Failed(x) => (x, "orbit has no canonical member".to_string()),
            Trouble::Unsound(x, d) => (x, d),
        };
        if report.counterexample.is_none() {
            report.counterexample = Some(Counterexample { verdict: "canonicalization consistent".into(), pair, detail });
        }
    }
}

/// Orbit membership of every free cyclic submodule, for lookups after a
/// decomposition.
#[derive(Clone, Debug)]
pub struct OrbitIndex {
    n: usize,
    field: PrimeField,
    orbit_of: HashMap<u64, usize>,
    canonical: Vec<Option<ModulePair>>,
}

impl OrbitIndex {
    fn new(n: usize, field: PrimeField, groups: &[Vec<u64>]) -> Self {
        let mut orbit_of = HashMap::new();
        let mut canonical = Vec::with_capacity(groups.len());
        for (i, g) in groups.iter().enumerate() {
            let canon: Vec<ModulePair> =
                g.iter().map(|&c| ModulePair::from_code(n, field, c)).filter(is_canonical).collect();
            canonical.push(if canon.len() == 1 { canon.into_iter().next() } else { None });
            orbit_of.extend(g.iter().map(|&c| (c, i)));
        }
        OrbitIndex { n, field, orbit_of, canonical }
    }

    /// Position of the pair's orbit in [`OrbitReport::orbits`]; `None` for
    /// pairs that are not free or do not match the index's size and field.
    pub fn orbit_of(&self, pair: &ModulePair) -> Option<usize> {
        if pair.n() != self.n || pair.field() != self.field {
            return None;
        }
        self.orbit_of.get(&submodule_key(pair).code()).copied()
    }

    /// The unique canonical pair in the orbit of `pair`, if there is one.
    pub fn canonical_member(&self, pair: &ModulePair) -> Option<&ModulePair> {
        self.orbit_of(pair).and_then(|i| self.canonical[i].as_ref())
    }
}

/// Full exhaustive check: the orbit decomposition plus canonicalization of
/// every free pair, compared with the orbit's canonical member.
pub fn verify_classification(n: usize, field: PrimeField, budget: u128) -> Result<OrbitReport> {
    verify_classification_indexed(n, field, budget).map(|(r, _)| r)
}

/// [`verify_classification`], also returning the orbit index it built.
pub fn verify_classification_indexed(n: usize, field: PrimeField, budget: u128) -> Result<(OrbitReport, OrbitIndex)> {
    let (mut report, groups) = decompose(n, field, budget, &gl2_generators(n, field))?;
    let index = OrbitIndex::new(n, field, &groups);
    let total = pair_count(n, field) as u64;
    let tally = (0..total)
        .into_par_iter()
        .filter_map(|code| {
            let x = ModulePair::from_code(n, field, code);
            x.is_free().then_some(x)
        })
        .map(|x| {
            let want = index.canonical_member(&x);
            check_one(&x, |out| match want {
                Some(c) if c == out => Ok(()),
                Some(_) => Err("output is not the canonical member of the orbit".into()),
                None => Err("orbit has no unique canonical member".into()),
            })
        })
        .reduce(Tally::empty, Tally::merge);
    record(&mut report, tally);
    Ok((report, index))
}

/// A uniformly random free pair.
pub fn random_free_pair(n: usize, field: PrimeField, rng: &mut impl Rng) -> ModulePair {
    let len = packed_len(n);
    let p = field.modulus();
    loop {
        let mut draw = || {
            let data = (0..len).map(|_| field.elem(rng.gen_range(0..p) as i64)).collect();
            LowerTriMatrix::from_packed(n, field, data).expect("valid length")
        };
        let (a, b) = (draw(), draw());
        let x = ModulePair::new(a, b).expect("same shape");
        if x.is_free() {
            return x;
        }
    }
}

/// A random element of `GL_2(T_n)` as a product of `len` generators.
fn random_word(gens: &[GL2Element], len: usize, rng: &mut impl Rng) -> GL2Element {
    let mut g = GL2Element::identity(gens[0].n(), gens[0].field());
    for _ in 0..len {
        g = g.mul(&gens[rng.gen_range(0..gens.len())]).expect("same dimensions");
    }
    g
}

/// Seeded sampling check for sizes beyond exhaustive reach: `samples`
/// random free pairs are canonicalized and certified, and each is compared
/// with the canonicalization of a random translate `U x g` and, when an
/// orbit index is supplied, with the canonical member it records. Orbit
/// counts are not decided in this mode.
pub fn verify_sampled(
    n: usize,
    field: PrimeField,
    samples: u64,
    seed: u64,
    index: Option<&OrbitIndex>,
) -> Result<OrbitReport> {
    if n == 0 {
        return Err(Error::UnsupportedDimension(n));
    }
    if let Some(ix) = index {
        if ix.n != n || ix.field != field {
            return Err(Error::DimensionMismatch("orbit index is for another size or field".into()));
        }
    }
    let gens = gl2_generators(n, field);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(ModulePair, LowerTriMatrix, GL2Element)> = (0..samples)
        .map(|_| {
            let x = random_free_pair(n, field, &mut rng);
            let u = random_unit(n, field, &mut rng);
            let g = random_word(&gens, 3 * n, &mut rng);
            (x, u, g)
        })
        .collect();
    let tally = cases
        .par_iter()
        .map(|(x, u, g)| {
            let moved = g.act_right(&x.left_mul(u).expect("unit")).expect("same dimensions");
            let other = canonicalize(&moved).ok().map(|c| c.canonical);
            check_one(x, |out| {
                match &other {
                    Some(o) if o == out => {}
                    Some(_) => return Err("a translate of the input canonicalizes differently".into()),
                    None => return Err("a translate of the input does not canonicalize".into()),
                }
                match index.map(|ix| ix.canonical_member(x)) {
                    None => Ok(()),
                    Some(Some(c)) if c == out => Ok(()),
                    Some(Some(_)) => Err("output is not the canonical member of the orbit".into()),
                    Some(None) => Err("orbit has no unique canonical member".into()),
                }
            })
        })
        .reduce(Tally::empty, Tally::merge);
    let mut report = OrbitReport {
        n,
        p: field.modulus(),
        mode: Mode::Sampled,
        seed: Some(seed),
        total_free_pairs: samples,
        total_free_submodules: None,
        orbit_count: None,
        bell: bell(n).to_string(),
        orbits: Vec::new(),
        verdicts: Verdicts::default(),
        canonicalization_failures: 0,
        residual_activations: 0,
        counterexample: None,
    };
    record(&mut report, tally);
    Ok(report)
}

fn random_unit(n: usize, field: PrimeField, rng: &mut impl Rng) -> LowerTriMatrix {
    let p = field.modulus();
    let mut u = LowerTriMatrix::zero(n, field);
    for i in 0..n {
        u.set(i, i, field.elem(rng.gen_range(1..p) as i64));
        for j in 0..i {
            u.set(i, j, field.elem(rng.gen_range(0..p) as i64));
        }
    }
    u
}
