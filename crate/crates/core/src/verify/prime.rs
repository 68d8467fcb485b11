use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

const TAG_PRIME: u8 = 0x06;
const SIEVE_LIMIT: usize = 1 << 14;

/// Bit length of every `hash_to_prime` output.
pub const HASH_PRIME_BITS: u64 = 256;

/// Fixed witnesses for the deterministic test: the first 12 primes. This set
/// is exact below 3.3e24; above that the error on hash-derived (not
/// adversarially chosen) inputs is far below 2^-100.
const FIXED_BASES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut composite = vec![false; SIEVE_LIMIT];
        let mut primes = Vec::new();
        for i in 2..SIEVE_LIMIT {
            if !composite[i] {
                primes.push(i as u32);
                let mut j = i * i;
                while j < SIEVE_LIMIT {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes
    })
}

fn residues(n: &BigUint) -> Vec<u32> {
    small_primes()
        .iter()
        .map(|&p| (n % p).to_u32().unwrap())
        .collect()
}

/// Miller-Rabin with the given bases. `n` must be odd and greater than 3.
pub fn miller_rabin<I>(n: &BigUint, bases: I) -> bool
where
    I: IntoIterator<Item = BigUint>,
{
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'bases: for base in bases {
        let a = base % n;
        if a <= one || a == n_minus_one {
            continue;
        }
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&BigUint::from(2u8), n);
            if x == n_minus_one {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

fn trial_division(n: &BigUint) -> Option<bool> {
    if let Some(small) = n.to_u64() {
        if small < 2 {
            return Some(false);
        }
        for &p in small_primes() {
            let p = p as u64;
            if p * p > small {
                return Some(true);
            }
            if small % p == 0 {
                return Some(small == p);
            }
        }
        return None;
    }
    for &p in small_primes() {
        if (n % p).is_zero() {
            return Some(false);
        }
    }
    None
}

/// Trial division followed by Miller-Rabin over 12 fixed prime bases.
/// Deterministic, so both sides of the protocol agree on every label.
pub fn is_probable_prime(n: &BigUint) -> bool {
    match trial_division(n) {
        Some(answer) => answer,
        None => miller_rabin(n, FIXED_BASES.iter().map(|&b| BigUint::from(b))),
    }
}

/// Miller-Rabin with `rounds` uniformly random bases.
pub fn is_probable_prime_random<R: RngCore>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    match trial_division(n) {
        Some(answer) => answer,
        None => {
            let upper = n - 1u8;
            let bases: Vec<BigUint> = (0..rounds)
                .map(|_| rng.gen_biguint_range(&BigUint::from(2u8), &upper))
                .collect();
            miller_rabin(n, bases)
        }
    }
}

/// Marks offsets `k < window` for which `a * (start + 2k) + b` has a small
/// prime factor, given `start mod p` for every sieving prime.
fn sieve_window(res: &[u32], a: u64, b: u64, window: usize, marks: &mut [bool]) {
    for (&r, &p) in res.iter().zip(small_primes()).skip(1) {
        let p = p as u64;
        // a*(r + 2k) + b == 0 (mod p)  <=>  k == -(a*r + b) * (2a)^-1 (mod p)
        let step = (2 * a) % p;
        if step == 0 {
            continue;
        }
        let target = (p - (a * r as u64 + b) % p) % p;
        let k0 = (target * mod_inverse(step, p)) % p;
        let mut k = k0 as usize;
        while k < window {
            marks[k] = true;
            k += p as usize;
        }
    }
}

fn mod_inverse(a: u64, p: u64) -> u64 {
    // p is prime: a^(p-2) mod p
    let (mut base, mut exp, mut acc) = (a % p, p - 2, 1u64);
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        exp >>= 1;
    }
    acc
}

const WINDOW: usize = 4096;

/// Smallest probable prime `>= start`.
pub fn next_prime(start: &BigUint) -> BigUint {
    if *start <= BigUint::from(2u8) {
        return BigUint::from(2u8);
    }
    if start.bits() <= 28 {
        let mut n = start.clone();
        while !is_probable_prime(&n) {
            n += 1u8;
        }
        return n;
    }
    let mut base = start.clone();
    if base.is_even() {
        base += 1u8;
    }
    let two = BigUint::from(2u8);
    loop {
        let mut marks = vec![false; WINDOW];
        sieve_window(&residues(&base), 1, 0, WINDOW, &mut marks);
        for (k, _) in marks.iter().enumerate().filter(|(_, m)| !**m) {
            let candidate = &base + 2 * k as u64;
            if miller_rabin(&candidate, [two.clone()]) && is_probable_prime(&candidate) {
                return candidate;
            }
        }
        base += 2 * WINDOW as u64;
    }
}

/// `H_p`: a deterministic 256-bit prime derived from `label`.
///
/// The digest gets its top two bits forced to `10`, so the next prime above
/// it still has exactly 256 bits.
pub fn hash_to_prime(label: &[u8]) -> BigUint {
    let mut hasher = Sha256::new();
    hasher.update([TAG_PRIME]);
    hasher.update(label);
    let mut digest: [u8; 32] = hasher.finalize().into();
    digest[0] = (digest[0] & 0x3f) | 0x80;
    next_prime(&BigUint::from_bytes_be(&digest))
}

/// Random probable prime with exactly `bits` bits and the top two bits set.
pub fn generate_prime<R: RngCore + CryptoRng>(bits: u64, rng: &mut R) -> BigUint {
    assert!(bits >= 16, "prime too small");
    let mut start = rng.gen_biguint(bits);
    start.set_bit(bits - 1, true);
    start.set_bit(bits - 2, true);
    let p = next_prime(&start);
    if p.bits() == bits {
        p
    } else {
        generate_prime(bits, rng)
    }
}

/// Random safe prime `p = 2q + 1` with exactly `bits` bits.
///
/// Candidates for `q` are stepped through a window and sieved so that
/// neither `q` nor `2q + 1` has a small factor; only survivors reach
/// Miller-Rabin.
pub fn generate_safe_prime<R: RngCore + CryptoRng>(bits: u64, rng: &mut R) -> BigUint {
    assert!(bits >= 32, "safe prime too small");
    let two = BigUint::from(2u8);
    loop {
        let mut q = rng.gen_biguint(bits - 1);
        q.set_bit(bits - 2, true);
        q.set_bit(bits - 3, true);
        q.set_bit(0, true);
        let res = residues(&q);
        let mut marks = vec![false; WINDOW];
        sieve_window(&res, 1, 0, WINDOW, &mut marks);
        sieve_window(&res, 2, 1, WINDOW, &mut marks);
        for (k, _) in marks.iter().enumerate().filter(|(_, m)| !**m) {
            let q = &q + 2 * k as u64;
            let p = &q * 2u8 + 1u8;
            if miller_rabin(&q, [two.clone()])
                && miller_rabin(&p, [two.clone()])
                && is_probable_prime(&q)
                && is_probable_prime(&p)
                && p.bits() == bits
            {
                return p;
            }
        }
    }
}
