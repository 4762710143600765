use serde::{Deserialize, Serialize};

use crate::crypto::group::{GroupElement, GroupParams, Scalar};
use crate::encoding::{Canonical, DecodeError, Value};

/// Pedersen commitment `C = g^s · h^r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Commitment(pub GroupElement);

impl Commitment {
    pub fn element(&self) -> &GroupElement {
        &self.0
    }

    /// Group product, which commits to the sums of secrets and blindings.
    pub fn combine(&self, params: &GroupParams, other: &Commitment) -> Commitment {
        Commitment(params.mul(&self.0, &other.0))
    }

    pub fn opens_to(&self, params: &GroupParams, s: &Scalar, r: &Scalar) -> bool {
        commit(params, s, r) == *self
    }
}

pub fn commit(params: &GroupParams, s: &Scalar, r: &Scalar) -> Commitment {
    Commitment(params.mul(&params.exp_g(s), &params.exp(params.h(), r)))
}

impl Canonical for Commitment {
    fn to_value(&self) -> Value {
        self.0.to_value()
    }

    fn from_value(value: &Value) -> Result<Self, DecodeError> {
        GroupElement::from_value(value).map(Commitment)
    }
}
