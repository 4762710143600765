//! Prime-order subgroups of `Z_p^*`.
//!
//! Both profiles run through the same code: the production group has a
//! 256-bit order inside a 2048-bit modulus, the toy group has order 101
//! inside `Z_607^*` so tests can enumerate every exponent.

use std::fmt;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::b64;
use crate::crypto::digest::hash_parts;
use crate::encoding::{as_bytes, Canonical, DecodeError, Value};

/// 2048-bit prime `p = k·q + 1`. `q` is the first prime after
/// SHA-256("cpx/production/q" ‖ 0) with the top bit forced; `k` starts at
/// `2^2047 / q + 1 + expand("cpx/production/cofactor")` and steps by two.
const PRODUCTION_P: &str = "8000000000000000000000000000000000000000000000001e0199675ad77a96ded01cf8fc2b7351e75ea2f8a656e23b4c3d525b887b97c6ded206f7e19d2a851441cd193518aca32ecdcb112d8cac55b5e6a8ad86e6ac3f08ae18acc6de22e26896ece9cc86b35801e4be860b7b3cefa964a94afb5e8384dabfec4aa1a5ef2f861e1c84d4e1af68b30f3c0b57ba1afef3322ed9747abce32eb61037f95dff0a38c745de39dcb3501625dd1c039c7b6f884ee9a86b1ffef5aacd88888e4cf3c5be941e0aad207c8535c258ef3580d5ba6af5a56a76b10a75facfac8e1ec5214e5bf4bbb44fd27f70610a55db9b3732b26f5da77af6fb5866f5388c103860d46d";
const PRODUCTION_Q: &str = "b2663aeaa531f103f0370e4d95f0a9c140aa43097c927f000f864462366b5295";

const TOY_P: u64 = 607;
const TOY_Q: u64 = 101;

const H_LABEL: &[u8] = b"cpx/pedersen-h";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Production,
    Toy,
}

impl Profile {
    pub fn params(self) -> &'static GroupParams {
        GroupParams::for_profile(self)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Production => "production",
            Profile::Toy => "toy",
        })
    }
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "production" => Ok(Profile::Production),
            "toy" => Ok(Profile::Toy),
            other => Err(format!("unknown profile `{other}` (expected production or toy)")),
        }
    }
}

/// Integer modulo the group order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(pub(crate) BigUint);

/// Element of the order-`q` subgroup.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(pub(crate) BigUint);

impl Scalar {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }

    /// Decoding never reduces; range is checked by whoever consumes the value.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Scalar(BigUint::from_bytes_be(bytes))
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl GroupElement {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        GroupElement(BigUint::from_bytes_be(bytes))
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({:x})", self.0)
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = format!("{:x}", self.0);
        if hex.len() > 16 {
            write!(f, "GroupElement({}…)", &hex[..16])
        } else {
            write!(f, "GroupElement({hex})")
        }
    }
}

fn minimal_bytes_ok(b: &[u8]) -> bool {
    // exactly one encoding per integer: no leading zero byte except for zero itself
    !b.is_empty() && (b.len() == 1 || b[0] != 0)
}

macro_rules! bigint_newtype_codecs {
    ($ty:ident, $what:literal) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&b64::encode(&self.to_bytes()))
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                use serde::de::Error;
                let text = String::deserialize(d)?;
                let raw = b64::decode(&text).map_err(D::Error::custom)?;
                if !minimal_bytes_ok(&raw) {
                    return Err(D::Error::custom(concat!("non-minimal ", $what, " encoding")));
                }
                Ok($ty::from_bytes(&raw))
            }
        }

        impl Canonical for $ty {
            fn to_value(&self) -> Value {
                Value::Bytes(self.to_bytes())
            }

            fn from_value(value: &Value) -> Result<Self, DecodeError> {
                let raw = as_bytes(value, $what)?;
                if !minimal_bytes_ok(raw) {
                    return Err(DecodeError::Invalid {
                        field: $what.into(),
                        reason: "non-minimal integer encoding".into(),
                    });
                }
                Ok($ty::from_bytes(raw))
            }
        }
    };
}

bigint_newtype_codecs!(Scalar, "scalar");
bigint_newtype_codecs!(GroupElement, "group element");

/// Parameters of one prime-order cyclic group.
#[derive(Clone)]
pub struct GroupParams {
    profile: Profile,
    group_id: &'static str,
    p: BigUint,
    q: BigUint,
    cofactor: BigUint,
    g: GroupElement,
    h: GroupElement,
    scalar_len: usize,
    element_len: usize,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("group_id", &self.group_id)
            .field("order_bits", &self.q.bits())
            .field("modulus_bits", &self.p.bits())
            .finish()
    }
}

impl PartialEq for GroupParams {
    fn eq(&self, other: &Self) -> bool {
        self.group_id == other.group_id
    }
}

impl GroupParams {
    pub fn production() -> &'static GroupParams {
        static PARAMS: OnceLock<GroupParams> = OnceLock::new();
        PARAMS.get_or_init(|| {
            let p = BigUint::parse_bytes(PRODUCTION_P.as_bytes(), 16).expect("valid constant");
            let q = BigUint::parse_bytes(PRODUCTION_Q.as_bytes(), 16).expect("valid constant");
            Self::build(Profile::Production, "cpx-modp2048-q256", p, q)
        })
    }

    pub fn toy() -> &'static GroupParams {
        static PARAMS: OnceLock<GroupParams> = OnceLock::new();
        PARAMS.get_or_init(|| {
            Self::build(Profile::Toy, "cpx-toy-607-q101", BigUint::from(TOY_P), BigUint::from(TOY_Q))
        })
    }

    pub fn for_profile(profile: Profile) -> &'static GroupParams {
        match profile {
            Profile::Production => Self::production(),
            Profile::Toy => Self::toy(),
        }
    }

    /// Looks up parameters by their `group_id`.
    pub fn by_id(group_id: &str) -> Option<&'static GroupParams> {
        [Self::production(), Self::toy()].into_iter().find(|p| p.group_id == group_id)
    }

    fn build(profile: Profile, group_id: &'static str, p: BigUint, q: BigUint) -> GroupParams {
        let cofactor = (&p - 1u32) / &q;
        assert!(((&p - 1u32) % &q).is_zero(), "q must divide p - 1");
        let g = BigUint::from(2u32).modpow(&cofactor, &p);
        assert!(!g.is_one(), "2 must not lie in the cofactor subgroup");
        let scalar_len = q.to_bytes_be().len();
        let element_len = p.to_bytes_be().len();
        let mut params = GroupParams {
            profile,
            group_id,
            p,
            q,
            cofactor,
            g: GroupElement(g),
            h: GroupElement(BigUint::one()),
            scalar_len,
            element_len,
        };
        params.h = params.hash_to_group(H_LABEL);
        params
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn group_id(&self) -> &'static str {
        self.group_id
    }

    pub fn order(&self) -> &BigUint {
        &self.q
    }

    pub fn modulus(&self) -> &BigUint {
        &self.p
    }

    pub fn g(&self) -> &GroupElement {
        &self.g
    }

    pub fn h(&self) -> &GroupElement {
        &self.h
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(BigUint::one())
    }

    /// Byte width of a fixed-width scalar encoding.
    pub fn scalar_len(&self) -> usize {
        self.scalar_len
    }

    pub fn element_len(&self) -> usize {
        self.element_len
    }

    pub fn scalar(&self, n: impl Into<BigUint>) -> Scalar {
        Scalar(n.into() % &self.q)
    }

    pub fn scalar_from_u64(&self, n: u64) -> Scalar {
        self.scalar(BigUint::from(n))
    }

    /// True when the scalar is reduced, i.e. `0 <= s < q`.
    pub fn is_canonical_scalar(&self, s: &Scalar) -> bool {
        s.0 < self.q
    }

    /// Subgroup membership: `1 <= x < p` and `x^q = 1`.
    pub fn contains(&self, e: &GroupElement) -> bool {
        !e.0.is_zero() && e.0 < self.p && e.0.modpow(&self.q, &self.p).is_one()
    }

    pub fn exp(&self, base: &GroupElement, e: &Scalar) -> GroupElement {
        GroupElement(base.0.modpow(&e.0, &self.p))
    }

    pub fn exp_g(&self, e: &Scalar) -> GroupElement {
        self.exp(&self.g, e)
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.p)
    }

    pub fn inverse(&self, a: &GroupElement) -> GroupElement {
        // a^(q-1) = a^-1 inside the order-q subgroup
        GroupElement(a.0.modpow(&(&self.q - 1u32), &self.p))
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.q)
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        let a = &a.0 % &self.q;
        let b = &b.0 % &self.q;
        Scalar((a + &self.q - b) % &self.q)
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.q)
    }

    /// Uniform scalar; 16 extra bytes keep the modular bias below 2^-128.
    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        let mut buf = vec![0u8; self.scalar_len + 16];
        rng.fill_bytes(&mut buf);
        Scalar(BigUint::from_bytes_be(&buf) % &self.q)
    }

    /// Hashes `(group_id, domain, data)` onto a scalar.
    pub fn hash_to_scalar(&self, domain: &[u8], data: &[u8]) -> Scalar {
        let wide = self.expand(domain, data, self.scalar_len + 16);
        Scalar(BigUint::from_bytes_be(&wide) % &self.q)
    }

    /// Deterministic element with unknown discrete log relative to `g`.
    pub fn hash_to_group(&self, label: &[u8]) -> GroupElement {
        let mut counter: u32 = 0;
        loop {
            let wide = self.expand(label, &counter.to_be_bytes(), self.element_len + 16);
            let x = BigUint::from_bytes_be(&wide) % &self.p;
            let candidate = x.modpow(&self.cofactor, &self.p);
            if !candidate.is_zero() && !candidate.is_one() && candidate != self.g.0 {
                return GroupElement(candidate);
            }
            counter += 1;
        }
    }

    fn expand(&self, domain: &[u8], data: &[u8], len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len + 32);
        let mut block: u32 = 0;
        while out.len() < len {
            out.extend_from_slice(&hash_parts(&[
                self.group_id.as_bytes(),
                domain,
                &block.to_be_bytes(),
                data,
            ]));
            block += 1;
        }
        out.truncate(len);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn toy_generators_have_prime_order() {
        let params = GroupParams::toy();
        for e in [params.g(), params.h()] {
            assert!(params.contains(e));
            assert_ne!(e, &params.identity());
        }
        assert_ne!(params.g(), params.h());
    }

    #[test]
    fn production_generators_have_prime_order() {
        let params = GroupParams::production();
        assert!(params.order().bits() >= 250);
        assert!(params.contains(params.g()));
        assert!(params.contains(params.h()));
        assert_ne!(params.h(), &params.identity());
    }

    #[test]
    fn scalar_arithmetic_wraps() {
        let params = GroupParams::toy();
        let a = params.scalar_from_u64(100);
        let b = params.scalar_from_u64(5);
        assert_eq!(params.scalar_add(&a, &b), params.scalar_from_u64(4));
        assert_eq!(params.scalar_sub(&b, &a), params.scalar_from_u64(6));
        assert_eq!(params.scalar_mul(&a, &b), params.scalar_from_u64(500 % 101));
    }

    #[test]
    fn inverse_cancels() {
        let params = GroupParams::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = params.exp_g(&params.random_scalar(&mut rng));
        assert_eq!(params.mul(&x, &params.inverse(&x)), params.identity());
    }

    #[test]
    fn membership_rejects_non_members() {
        let params = GroupParams::toy();
        assert!(!params.contains(&GroupElement(BigUint::zero())));
        assert!(!params.contains(&GroupElement(BigUint::from(TOY_P))));
        // 606 = -1 has order 2
        assert!(!params.contains(&GroupElement(BigUint::from(606u32))));
    }

    #[test]
    fn random_scalars_are_reduced() {
        let params = GroupParams::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..500 {
            assert!(params.is_canonical_scalar(&params.random_scalar(&mut rng)));
        }
    }

    #[test]
    fn lookup_by_id() {
        let toy = GroupParams::toy();
        assert_eq!(GroupParams::by_id(toy.group_id()), Some(toy));
        assert!(GroupParams::by_id("nope").is_none());
    }
}
