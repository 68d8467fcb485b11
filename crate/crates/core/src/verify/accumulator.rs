use std::collections::HashMap;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::{CryptoRng, RngCore};

use super::prime::generate_safe_prime;
use crate::crypto::Block;
use crate::error::AccumulatorError;

/// Public accumulator parameters: RSA modulus and a quadratic-residue generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumulatorParams {
    pub n: BigUint,
    pub g: BigUint,
}

impl AccumulatorParams {
    pub fn modulus_bits(&self) -> u64 {
        self.n.bits()
    }
}

/// `g^(product of primes) mod n`, computed without the trapdoor.
pub fn accumulate<'a, I>(params: &AccumulatorParams, primes: I) -> BigUint
where
    I: IntoIterator<Item = &'a BigUint>,
{
    let product = primes
        .into_iter()
        .fold(BigUint::one(), |acc, p| acc * p);
    params.g.modpow(&product, &params.n)
}

/// Membership witness `g^(x_p / x) mod n` from the group product.
pub fn witness(
    params: &AccumulatorParams,
    product: &BigUint,
    x: &BigUint,
) -> Result<BigUint, AccumulatorError> {
    let (quotient, rem) = product.div_rem(x);
    if rem != BigUint::default() {
        return Err(AccumulatorError::NotMember);
    }
    Ok(params.g.modpow(&quotient, &params.n))
}

/// Checks `witness^x == ac (mod n)`.
pub fn verify(params: &AccumulatorParams, x: &BigUint, witness: &BigUint, ac: &BigUint) -> bool {
    witness < &params.n && witness.modpow(x, &params.n) == *ac
}

#[derive(Clone)]
struct Trapdoor {
    p: BigUint,
    q: BigUint,
    p_minus_one: BigUint,
    q_minus_one: BigUint,
    phi: BigUint,
    /// `q^-1 mod p`, for CRT recombination.
    q_inv: BigUint,
}

/// Trusted-side accumulator: public parameters plus the factorization of
/// `n`, which lets updates reduce exponents modulo `p - 1` and `q - 1`.
#[derive(Clone)]
pub struct Accumulator {
    params: AccumulatorParams,
    trapdoor: Trapdoor,
}

impl std::fmt::Debug for Accumulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Accumulator")
            .field("modulus_bits", &self.params.modulus_bits())
            .finish_non_exhaustive()
    }
}

impl Accumulator {
    /// Generates `n = p q` from two safe primes of `bits / 2` bits each.
    pub fn setup<R: RngCore + CryptoRng>(bits: u32, rng: &mut R) -> Result<Self, AccumulatorError> {
        if bits != 1024 && bits != 2048 {
            return Err(AccumulatorError::UnsupportedModulus(bits));
        }
        let half = bits as u64 / 2;
        let p = generate_safe_prime(half, rng);
        let mut q = generate_safe_prime(half, rng);
        while q == p {
            q = generate_safe_prime(half, rng);
        }
        Self::from_primes(p, q, rng)
    }

    /// Builds an accumulator from known primes; the generator is a random
    /// quadratic residue.
    pub fn from_primes<R: RngCore>(
        p: BigUint,
        q: BigUint,
        rng: &mut R,
    ) -> Result<Self, AccumulatorError> {
        let n = &p * &q;
        let q_inv = q.modinv(&p).ok_or(AccumulatorError::NotInvertible)?;
        let g = loop {
            let r = rng.gen_biguint_range(&BigUint::from(2u8), &n);
            if r.gcd(&n).is_one() {
                let g = r.modpow(&BigUint::from(2u8), &n);
                if !g.is_one() {
                    break g;
                }
            }
        };
        let p_minus_one = &p - 1u8;
        let q_minus_one = &q - 1u8;
        Ok(Accumulator {
            params: AccumulatorParams { n, g },
            trapdoor: Trapdoor {
                phi: &p_minus_one * &q_minus_one,
                p,
                q,
                p_minus_one,
                q_minus_one,
                q_inv,
            },
        })
    }

    pub fn params(&self) -> &AccumulatorParams {
        &self.params
    }

    /// The two factors of `n`.
    pub fn factors(&self) -> (&BigUint, &BigUint) {
        (&self.trapdoor.p, &self.trapdoor.q)
    }

    /// Accumulation value of the empty set.
    pub fn empty(&self) -> BigUint {
        self.params.g.clone()
    }

    /// `base^exponent mod n` via CRT with exponents reduced mod `p-1`, `q-1`.
    pub fn pow(&self, base: &BigUint, exponent: &BigUint) -> BigUint {
        let t = &self.trapdoor;
        let ap = (base % &t.p).modpow(&(exponent % &t.p_minus_one), &t.p);
        let aq = (base % &t.q).modpow(&(exponent % &t.q_minus_one), &t.q);
        // Garner: x = aq + q * ((ap - aq) * q^-1 mod p)
        let diff = (&ap + &t.p - (&aq % &t.p)) % &t.p;
        let h = (diff * &t.q_inv) % &t.p;
        aq + &t.q * h
    }

    pub fn insert(&self, ac: &BigUint, x: &BigUint) -> BigUint {
        self.pow(ac, x)
    }

    /// `ac^(x^-1 mod phi(n))`. The caller must already know `x` is a member.
    pub fn remove(&self, ac: &BigUint, x: &BigUint) -> Result<BigUint, AccumulatorError> {
        let inverse = x
            .modinv(&self.trapdoor.phi)
            .ok_or(AccumulatorError::NotInvertible)?;
        Ok(self.pow(ac, &inverse))
    }

    /// Removes `old` and inserts `new` with a single exponentiation.
    pub fn replace(
        &self,
        ac: &BigUint,
        old: &BigUint,
        new: &BigUint,
    ) -> Result<BigUint, AccumulatorError> {
        let inverse = old
            .modinv(&self.trapdoor.phi)
            .ok_or(AccumulatorError::NotInvertible)?;
        Ok(self.pow(ac, &((inverse * new) % &self.trapdoor.phi)))
    }
}

/// Trusted half of the grouped digest store: one accumulation value and a
/// member count per group. Which keyword sits in which group is kept by the
/// untrusted store and proven by witnesses.
#[derive(Debug, Clone)]
pub struct AccumulatorGroups {
    acc: Accumulator,
    capacity: usize,
    values: Vec<BigUint>,
    counts: Vec<usize>,
}

impl AccumulatorGroups {
    pub fn new(acc: Accumulator, capacity: usize) -> Self {
        assert!(capacity > 0, "group capacity must be positive");
        AccumulatorGroups {
            acc,
            capacity,
            values: Vec::new(),
            counts: Vec::new(),
        }
    }

    pub fn accumulator(&self) -> &Accumulator {
        &self.acc
    }

    pub fn params(&self) -> &AccumulatorParams {
        self.acc.params()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn group_count(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, group: u32) -> Option<&BigUint> {
        self.values.get(group as usize)
    }

    pub fn count(&self, group: u32) -> usize {
        self.counts.get(group as usize).copied().unwrap_or(0)
    }

    /// Group for a new key: `key mod group_count`, then the next group with
    /// room, else a fresh group.
    pub fn assign(&self, key: &Block) -> u32 {
        let groups = self.values.len();
        if groups > 0 {
            let start = (u64::from_le_bytes(key[..8].try_into().unwrap()) % groups as u64) as usize;
            for offset in 0..groups {
                let g = (start + offset) % groups;
                if self.counts[g] < self.capacity {
                    return g as u32;
                }
            }
        }
        groups as u32
    }

    pub fn insert(&mut self, group: u32, x: &BigUint) -> Result<(), AccumulatorError> {
        let g = group as usize;
        if g == self.values.len() {
            self.values.push(self.acc.empty());
            self.counts.push(0);
        }
        if g > self.values.len() || self.counts[g] >= self.capacity {
            return Err(AccumulatorError::UnknownGroup(group));
        }
        self.values[g] = self.acc.insert(&self.values[g], x);
        self.counts[g] += 1;
        Ok(())
    }

    pub fn remove(&mut self, group: u32, x: &BigUint) -> Result<(), AccumulatorError> {
        let g = group as usize;
        if g >= self.values.len() || self.counts[g] == 0 {
            return Err(AccumulatorError::UnknownGroup(group));
        }
        self.values[g] = self.acc.remove(&self.values[g], x)?;
        self.counts[g] -= 1;
        Ok(())
    }

    pub fn replace(&mut self, group: u32, old: &BigUint, new: &BigUint) -> Result<(), AccumulatorError> {
        let g = group as usize;
        if g >= self.values.len() || self.counts[g] == 0 {
            return Err(AccumulatorError::UnknownGroup(group));
        }
        self.values[g] = self.acc.replace(&self.values[g], old, new)?;
        Ok(())
    }

    pub fn verify(&self, group: u32, x: &BigUint, witness: &BigUint) -> bool {
        match self.value(group) {
            Some(ac) => verify(self.acc.params(), x, witness, ac),
            None => false,
        }
    }
}

#[derive(Debug, Clone)]
struct ProductGroup {
    product: BigUint,
    members: usize,
    /// Cached witnesses by member key, each current up to a position in
    /// `added`. Later primes are folded in when the witness is read.
    witnesses: HashMap<Block, (BigUint, usize)>,
    /// Primes inserted since the cache was last reset.
    added: Vec<BigUint>,
    /// `g^product`, when known without a full exponentiation.
    value: Option<BigUint>,
}

impl ProductGroup {
    fn reset_cache(&mut self, keep: Option<(Block, BigUint)>) {
        self.witnesses.clear();
        self.added.clear();
        if let Some((key, w)) = keep {
            self.witnesses.insert(key, (w, 0));
        }
    }

    /// The cached witness of `key` brought up to date, if there is one.
    fn cached(&mut self, key: &Block, n: &BigUint) -> Option<BigUint> {
        let (w, at) = self.witnesses.get_mut(key)?;
        if *at < self.added.len() {
            let exponent = self.added[*at..].iter().fold(BigUint::one(), |e, x| e * x);
            *w = w.modpow(&exponent, n);
            *at = self.added.len();
        }
        Some(w.clone())
    }
}

/// Untrusted half of the grouped digest store: the product `x_p` of each
/// group's member primes, used to compute witnesses without the trapdoor.
#[derive(Debug, Clone)]
pub struct GroupProducts {
    params: AccumulatorParams,
    groups: Vec<ProductGroup>,
}

impl GroupProducts {
    pub fn new(params: AccumulatorParams) -> Self {
        GroupProducts {
            params,
            groups: Vec::new(),
        }
    }

    pub fn params(&self) -> &AccumulatorParams {
        &self.params
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn product(&self, group: u32) -> Option<&BigUint> {
        self.groups.get(group as usize).map(|g| &g.product)
    }

    pub fn members(&self, group: u32) -> usize {
        self.groups.get(group as usize).map_or(0, |g| g.members)
    }

    /// `x_p <- x_p / old * new`. `key` identifies the member whose prime
    /// changes; its own cached witness survives a replacement because the
    /// product of the other members is unchanged.
    pub fn update(
        &mut self,
        group: u32,
        key: &Block,
        old: Option<&BigUint>,
        new: Option<&BigUint>,
    ) -> Result<(), AccumulatorError> {
        let g = group as usize;
        if g == self.groups.len() && old.is_none() {
            self.groups.push(ProductGroup {
                product: BigUint::one(),
                members: 0,
                witnesses: HashMap::new(),
                added: Vec::new(),
                value: Some(self.params.g.clone()),
            });
        }
        let entry = self
            .groups
            .get_mut(g)
            .ok_or(AccumulatorError::UnknownGroup(group))?;
        let mut product = entry.product.clone();
        if let Some(old) = old {
            let (q, r) = product.div_rem(old);
            if r != BigUint::default() {
                return Err(AccumulatorError::NotMember);
            }
            product = q;
        }
        if let Some(new) = new {
            product *= new;
        }
        entry.product = product;
        let n = &self.params.n;
        match (old, new) {
            (Some(_), Some(new)) => {
                let own = entry.cached(key, n);
                entry.value = own.as_ref().map(|w| w.modpow(new, n));
                entry.reset_cache(own.map(|w| (*key, w)));
            }
            (None, Some(new)) => {
                entry.members += 1;
                // every other member's exponent gains the new prime; the
                // new member's witness is the previous value
                entry.added.push(new.clone());
                if let Some(v) = entry.value.take() {
                    entry.value = Some(v.modpow(new, n));
                    entry.witnesses.insert(*key, (v, entry.added.len()));
                }
            }
            (Some(_), None) => {
                entry.members -= 1;
                entry.value = entry.cached(key, n);
                entry.reset_cache(None);
            }
            (None, None) => {}
        }
        Ok(())
    }

    /// Witness for member `key` holding prime `x` in `group`.
    pub fn witness(&mut self, group: u32, key: &Block, x: &BigUint) -> Result<BigUint, AccumulatorError> {
        let params = &self.params;
        let entry = self
            .groups
            .get_mut(group as usize)
            .ok_or(AccumulatorError::UnknownGroup(group))?;
        if let Some(w) = entry.cached(key, &params.n) {
            return Ok(w);
        }
        let w = witness(params, &entry.product, x)?;
        if entry.value.is_none() {
            entry.value = Some(w.modpow(x, &params.n));
        }
        entry.witnesses.insert(*key, (w.clone(), entry.added.len()));
        Ok(w)
    }
}
