//! Paillier additively homomorphic encryption, plus the fixed-point encoding
//! used to ship privacy weights in `[0, 1]` as integers.
//!
//! Key sizes in tests and simulations are tiny (16 to 64 bit moduli) so runs
//! stay fast. They give no security; real deployments need 2048-bit moduli
//! or larger.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Weights travel as `floor(w * WEIGHT_SCALE)`.
pub const WEIGHT_SCALE: u64 = 10_000;
pub const MIN_TEST_BITS: u64 = 16;

const PRIME_ATTEMPTS: usize = 10_000;
const MILLER_RABIN_ROUNDS: usize = 32;
const SMALL_PRIMES: [u32; 15] = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PaillierError {
    #[error("modulus needs at least {MIN_TEST_BITS} bits, got {0}")]
    BitLength(u64),
    #[error("could not find a suitable prime pair after {0} attempts")]
    PrimeGenerationFailure(usize),
    #[error("invalid key material: {0}")]
    InvalidKey(&'static str),
    #[error("plaintext {0} is not below the modulus")]
    PlaintextOutOfRange(BigUint),
    #[error("ciphertext is not a unit modulo b^2")]
    InvalidCiphertext,
    #[error("ciphertext was produced under a different public key")]
    KeyMismatch,
    #[error("weight {0} is outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("encoded weight {0} exceeds {WEIGHT_SCALE}")]
    WeightDecodeFailure(u64),
}

/// How the generator `g` is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorChoice {
    /// `g = b + 1`, which always works and makes `mu = lambda^-1 mod b`.
    #[default]
    Standard,
    /// Uniform `g` in `Z*_{b^2}`, redrawn until `mu` exists.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    b: BigUint,
    b_sq: BigUint,
    g: BigUint,
}

impl PublicKey {
    pub fn modulus(&self) -> &BigUint {
        &self.b
    }

    pub fn generator(&self) -> &BigUint {
        &self.g
    }

    /// Short identifier derived from the modulus.
    pub fn id(&self) -> u64 {
        self.b.iter_u64_digits().next().unwrap_or(0)
    }

    fn check_plaintext(&self, m: &BigUint) -> Result<(), PaillierError> {
        if m >= &self.b {
            return Err(PaillierError::PlaintextOutOfRange(m.clone()));
        }
        Ok(())
    }

    /// `g^m r^b mod b^2` with `r` drawn uniformly from the units mod `b`.
    pub fn encrypt<R: RngCore + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext, PaillierError> {
        self.check_plaintext(m)?;
        let r = loop {
            let r = random_below(&self.b, rng);
            if !r.is_zero() && r.gcd(&self.b).is_one() {
                break r;
            }
        };
        let gm = if self.g == &self.b + 1u32 {
            (BigUint::one() + m * &self.b) % &self.b_sq
        } else {
            self.g.modpow(m, &self.b_sq)
        };
        let value = gm * r.modpow(&self.b, &self.b_sq) % &self.b_sq;
        Ok(Ciphertext {
            value,
            key_id: self.id(),
        })
    }

    pub fn encrypt_u64<R: RngCore + ?Sized>(&self, m: u64, rng: &mut R) -> Result<Ciphertext, PaillierError> {
        self.encrypt(&BigUint::from(m), rng)
    }

    /// Ciphertext of the plaintext sum.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        Ciphertext {
            value: &a.value * &b.value % &self.b_sq,
            key_id: self.id(),
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey { .. }")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierKeypair {
    pub public: PublicKey,
    private: PrivateKey,
}

fn l_function(x: &BigUint, b: &BigUint) -> BigUint {
    (x - 1u32) / b
}

impl PaillierKeypair {
    /// Key pair from two primes. Used directly for hand-checkable examples.
    pub fn from_primes(p: &BigUint, q: &BigUint, g: Option<BigUint>) -> Result<Self, PaillierError> {
        if p == q {
            return Err(PaillierError::InvalidKey("primes must differ"));
        }
        let b = p * q;
        let p1 = p - 1u32;
        let q1 = q - 1u32;
        if !b.gcd(&(&p1 * &q1)).is_one() {
            return Err(PaillierError::InvalidKey("gcd(pq, (p-1)(q-1)) must be 1"));
        }
        let lambda = p1.lcm(&q1);
        let b_sq = &b * &b;
        let g = g.unwrap_or_else(|| &b + 1u32);
        if g.is_zero() || g >= b_sq || !g.gcd(&b_sq).is_one() {
            return Err(PaillierError::InvalidKey("g must be a unit modulo b^2"));
        }
        let mu = l_function(&g.modpow(&lambda, &b_sq), &b)
            .modinv(&b)
            .ok_or(PaillierError::InvalidKey("L(g^lambda mod b^2) is not invertible mod b"))?;
        Ok(Self {
            public: PublicKey { b, b_sq, g },
            private: PrivateKey { lambda, mu },
        })
    }

    /// Random key pair with a modulus of `bits` bits; deterministic given the rng state.
    pub fn generate<R: RngCore + ?Sized>(
        bits: u64,
        choice: GeneratorChoice,
        rng: &mut R,
    ) -> Result<Self, PaillierError> {
        if bits < MIN_TEST_BITS {
            return Err(PaillierError::BitLength(bits));
        }
        let p_bits = bits / 2;
        let q_bits = bits - p_bits;
        for _ in 0..PRIME_ATTEMPTS {
            let p = random_prime(p_bits, rng)?;
            let q = random_prime(q_bits, rng)?;
            if p == q {
                continue;
            }
            let b = &p * &q;
            if b.bits() != bits {
                continue;
            }
            let g = match choice {
                GeneratorChoice::Standard => None,
                GeneratorChoice::Random => Some(random_below(&(&b * &b), rng)),
            };
            match Self::from_primes(&p, &q, g) {
                Ok(kp) => return Ok(kp),
                Err(PaillierError::InvalidKey(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(PaillierError::PrimeGenerationFailure(PRIME_ATTEMPTS))
    }

    pub fn lambda(&self) -> &BigUint {
        &self.private.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.private.mu
    }

    /// `L(c^lambda mod b^2) * mu mod b`.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        if c.key_id != self.public.id() {
            return Err(PaillierError::KeyMismatch);
        }
        self.decrypt_unchecked(&c.value)
    }

    /// Decrypts a raw residue without checking which key produced it.
    pub fn decrypt_unchecked(&self, c: &BigUint) -> Result<BigUint, PaillierError> {
        let pk = &self.public;
        if c.is_zero() || c >= &pk.b_sq || !c.gcd(&pk.b_sq).is_one() {
            return Err(PaillierError::InvalidCiphertext);
        }
        let l = l_function(&c.modpow(&self.private.lambda, &pk.b_sq), &pk.b);
        Ok(l * &self.private.mu % &pk.b)
    }

    pub fn decrypt_u64(&self, c: &Ciphertext) -> Result<u64, PaillierError> {
        let m = self.decrypt(c)?;
        m.try_into().map_err(|_| PaillierError::InvalidCiphertext)
    }
}

/// Encrypted value; serializes as a decimal string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    key_id: u64,
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }
}

impl Serialize for Ciphertext {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.value.to_str_radix(10))
    }
}

/// Reads the residue only; the key id is unknown until paired with a key.
pub fn parse_ciphertext(decimal: &str, pk: &PublicKey) -> Option<Ciphertext> {
    BigUint::parse_bytes(decimal.as_bytes(), 10).map(|value| Ciphertext { value, key_id: pk.id() })
}

/// `floor(w * 10^4)`. Products within 1e-9 of an integer snap to it, so
/// decoded weights re-encode to themselves despite binary rounding.
pub fn encode_weight(w: f64) -> Result<u64, PaillierError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(PaillierError::WeightOutOfRange(w));
    }
    let scaled = w * WEIGHT_SCALE as f64;
    let nearest = scaled.round();
    let v = if (scaled - nearest).abs() < 1e-9 {
        nearest
    } else {
        scaled.floor()
    };
    Ok(v as u64)
}

pub fn decode_weight(v: u64) -> Result<f64, PaillierError> {
    if v > WEIGHT_SCALE {
        return Err(PaillierError::WeightDecodeFailure(v));
    }
    Ok(v as f64 / WEIGHT_SCALE as f64)
}

fn random_bits<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    let mut bytes = vec![0u8; bits.div_ceil(8) as usize];
    rng.fill_bytes(&mut bytes);
    let extra = bytes.len() as u64 * 8 - bits;
    if let Some(top) = bytes.first_mut() {
        *top &= 0xff >> extra;
    }
    BigUint::from_bytes_be(&bytes)
}

/// Uniform in `[0, bound)` by rejection.
fn random_below<R: RngCore + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    let bits = bound.bits();
    loop {
        let x = random_bits(bits, rng);
        if &x < bound {
            return x;
        }
    }
}

fn random_prime<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> Result<BigUint, PaillierError> {
    for _ in 0..PRIME_ATTEMPTS {
        let mut c = random_bits(bits, rng);
        c.set_bit(bits - 1, true);
        c.set_bit(bits - 2, true);
        c.set_bit(0, true);
        if is_probable_prime(&c, rng) {
            return Ok(c);
        }
    }
    Err(PaillierError::PrimeGenerationFailure(PRIME_ATTEMPTS))
}

/// Trial division by small primes, then Miller-Rabin with random bases.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    if n.is_even() {
        return n == &two;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n1 = n - 1u32;
    let s = n1.trailing_zeros().unwrap_or(0);
    let d = &n1 >> s;
    let span = n - 3u32;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = random_below(&span, rng) + 2u32;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn hand_computed_key() {
        let kp = PaillierKeypair::from_primes(&big(5), &big(7), None).unwrap();
        assert_eq!(kp.public.modulus(), &big(35));
        assert_eq!(kp.public.generator(), &big(36));
        assert_eq!(kp.lambda(), &big(12));
        assert_eq!(kp.mu(), &big(3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for m in 0..35 {
            let c = kp.public.encrypt_u64(m, &mut rng).unwrap();
            assert_eq!(kp.decrypt_u64(&c).unwrap(), m);
        }
    }

    #[test]
    fn keygen_is_deterministic_and_valid() {
        let a = PaillierKeypair::generate(32, GeneratorChoice::Standard, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = PaillierKeypair::generate(32, GeneratorChoice::Standard, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.public.modulus().bits(), 32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bits in [16, 24, 33, 64] {
            let kp = PaillierKeypair::generate(bits, GeneratorChoice::Standard, &mut rng).unwrap();
            assert_eq!(kp.public.modulus().bits(), bits);
        }
        assert_eq!(
            PaillierKeypair::generate(8, GeneratorChoice::Standard, &mut rng).unwrap_err(),
            PaillierError::BitLength(8)
        );
    }

    #[test]
    fn random_generator_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kp = PaillierKeypair::generate(40, GeneratorChoice::Random, &mut rng).unwrap();
        assert_ne!(kp.public.generator(), &(kp.public.modulus() + 1u32));
        for m in [0u64, 1, 7, 9999, 10_000] {
            let c = kp.public.encrypt_u64(m, &mut rng).unwrap();
            assert_eq!(kp.decrypt_u64(&c).unwrap(), m);
        }
    }

    #[test]
    fn ciphertexts_are_randomized_and_homomorphic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let kp = PaillierKeypair::generate(32, GeneratorChoice::Standard, &mut rng).unwrap();
        let c1 = kp.public.encrypt_u64(5, &mut rng).unwrap();
        let c2 = kp.public.encrypt_u64(5, &mut rng).unwrap();
        assert_ne!(c1, c2);
        assert_eq!(kp.decrypt_u64(&c1).unwrap(), kp.decrypt_u64(&c2).unwrap());
        let a = kp.public.encrypt_u64(3, &mut rng).unwrap();
        let b = kp.public.encrypt_u64(4, &mut rng).unwrap();
        assert_eq!(kp.decrypt_u64(&kp.public.add(&a, &b)).unwrap(), 7);
        let zero = kp.public.encrypt_u64(0, &mut rng).unwrap();
        assert_eq!(kp.decrypt_u64(&zero).unwrap(), 0);
    }

    #[test]
    fn wrong_key_does_not_recover_plaintext() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = PaillierKeypair::generate(32, GeneratorChoice::Standard, &mut rng).unwrap();
        let b = PaillierKeypair::generate(32, GeneratorChoice::Standard, &mut rng).unwrap();
        let c = a.public.encrypt_u64(1234, &mut rng).unwrap();
        assert_eq!(b.decrypt(&c), Err(PaillierError::KeyMismatch));
        let reduced = c.value() % (b.public.modulus() * b.public.modulus());
        if let Ok(m) = b.decrypt_unchecked(&reduced) {
            assert_ne!(m, big(1234));
        }
    }

    #[test]
    fn range_checks() {
        let kp = PaillierKeypair::from_primes(&big(5), &big(7), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            kp.public.encrypt_u64(35, &mut rng),
            Err(PaillierError::PlaintextOutOfRange(_))
        ));
        assert_eq!(kp.decrypt_unchecked(&big(5)), Err(PaillierError::InvalidCiphertext));
        assert!(PaillierKeypair::from_primes(&big(7), &big(7), None).is_err());
    }

    #[test]
    fn weight_encoding() {
        assert_eq!(encode_weight(0.0).unwrap(), 0);
        assert_eq!(encode_weight(1.0).unwrap(), 10_000);
        assert_eq!(encode_weight(0.123456).unwrap(), 1234);
        assert_eq!(decode_weight(1234).unwrap(), 0.1234);
        assert_eq!(decode_weight(10_000).unwrap(), 1.0);
        assert!(encode_weight(1.5).is_err());
        assert!(encode_weight(f64::NAN).is_err());
        assert!(decode_weight(10_001).is_err());
        for v in 0..=WEIGHT_SCALE {
            assert_eq!(encode_weight(decode_weight(v).unwrap()).unwrap(), v);
        }
    }

    #[test]
    fn primality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let primes = [2u64, 3, 61, 7919, 1_000_000_007, 2_147_483_647];
        let composites = [1u64, 4, 561, 1105, 7917, 1_000_000_011 * 3, 3_215_031_751];
        for p in primes {
            assert!(is_probable_prime(&big(p), &mut rng), "{p}");
        }
        for c in composites {
            assert!(!is_probable_prime(&big(c), &mut rng), "{c}");
        }
    }
}
