//! Helpers shared by the integration test binaries.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use cpx::agents::{Ecosystem, ProofAnswer, StoreOutcome};
use cpx::audit::{AuditEvent, ChainStatus, EventType};
use cpx::connections::FormationMode;
use cpx::credentials::{CredentialBody, HeldCredential};
use cpx::crypto::proofs::{fiat_shamir_challenge, sigma, EQUAL_SECRET_LABEL, OPENING_LABEL};
use cpx::crypto::schnorr::signature_challenge;
use cpx::crypto::{
    commit, keygen, prove_commitment_opening, prove_equal_secret, sign, verify_equal_secret, verify_opening_proof,
    verify_sig, Commitment, GroupElement, GroupParams, KnowledgeProof, Scalar, SchnorrSignature,
};
use cpx::encoding::{Canonical, Value};
use cpx::ids::Nonce;
use cpx::presentation::{
    evaluate, AttributeRestriction, AttributeSource, Check, DisclosedAttribute, Presentation, PresentedCredential,
    ProofRequest, RequestedAttribute,
};
use cpx::scenario::config::{DOCTOR, EDINBURGH, GMC};
use cpx::scenario::{run_scenario, EcosystemConfig, ScenarioRun, ScenarioScript, TimeModel};
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const RUN_SEED: u64 = 2020;

pub fn default_run(params: &'static GroupParams, seed: u64) -> ScenarioRun {
    run_scenario(&EcosystemConfig::default(), &ScenarioScript::default_career(), params, seed, &TimeModel::default())
        .expect("default career completes")
}

pub fn values(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Flips one byte to a different value.
pub fn mutate_byte(bytes: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut out = bytes.to_vec();
    let i = rng.gen_range(0..out.len());
    out[i] ^= rng.gen_range(1..=255u8);
    out
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TamperTally {
    pub trials: usize,
    pub accepted: usize,
    pub undecodable: usize,
    pub rejected: usize,
    pub body_trials: usize,
    pub presentation_trials: usize,
}

/// Single-byte mutations of accepted presentations from a run, half aimed at
/// the whole presentation encoding and half at one credential body. Every
/// decodable mutant is evaluated with a fresh nonce.
pub fn tamper_suite(run: &ScenarioRun, trials: usize, seed: u64) -> TamperTally {
    let eco = run.ecosystem();
    let accepted: Vec<_> = run.trace.verifications.iter().filter(|v| v.record.result.accepted).collect();
    assert!(!accepted.is_empty(), "run has accepted presentations");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tally = TamperTally { trials, ..TamperTally::default() };
    for trial in 0..trials {
        let v = accepted[trial % accepted.len()];
        let original = &v.record.presentation;
        let mutant = if trial % 2 == 0 {
            tally.presentation_trials += 1;
            Value::decode(&mutate_byte(&original.to_value().encode(), &mut rng))
                .ok()
                .and_then(|value| Presentation::from_value(&value).ok())
        } else {
            tally.body_trials += 1;
            let k = rng.gen_range(0..original.sources.len());
            let body = mutate_byte(&original.sources[k].body.to_value().encode(), &mut rng);
            Value::decode(&body).ok().and_then(|value| CredentialBody::from_value(&value).ok()).map(|body| {
                let mut p = original.clone();
                p.sources[k].body = body;
                p
            })
        };
        match mutant {
            None => tally.undecodable += 1,
            Some(p) => {
                let result = evaluate(eco.params, &eco.registry, &v.record.request, &p, true, v.record.timestamp);
                if result.accepted {
                    tally.accepted += 1;
                } else {
                    tally.rejected += 1;
                }
            }
        }
    }
    tally
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ReplayTally {
    pub replayed: usize,
    /// Replays whose nonce check failed.
    pub nonce_failed: usize,
    pub accepted: usize,
}

/// Re-submits every accepted presentation to the verifier that accepted it,
/// at the end of the run. Later checks such as expiry may fail as well.
pub fn replay_suite(run: &mut ScenarioRun) -> ReplayTally {
    let originals: Vec<(String, Presentation)> = run
        .trace
        .verifications
        .iter()
        .filter(|v| v.record.result.accepted)
        .map(|v| (v.verifier.clone(), v.record.presentation.clone()))
        .collect();
    let mut tally = ReplayTally::default();
    for (verifier, p) in originals {
        let result = run.runner.eco.verify_presentation(&verifier, &p).expect("verifier knows the request");
        tally.replayed += 1;
        if result.accepted {
            tally.accepted += 1;
        }
        if !result.passed(Check::Nonce) {
            tally.nonce_failed += 1;
        }
    }
    tally
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TheftTally {
    pub attempts: usize,
    pub accepted: usize,
    /// Rejections where only the link check failed.
    pub link_only: usize,
}

/// A thief holding the doctor's full GMC license record (values, salts,
/// signature, blinding) but not the link secret tries to present it.
/// Strategies rotate: a guessed secret with the true blinding, the thief's own
/// wallet answering the request, and a link proof replayed from an honest
/// presentation.
pub fn theft_suite(params: &'static GroupParams, attempts: usize, seed: u64) -> TheftTally {
    let mut eco = cpx::scenario::setup_ecosystem(&EcosystemConfig::default(), params, seed).expect("setup");
    eco.connect(GMC, DOCTOR, FormationMode::Website).unwrap();
    let license = values(&[("full_name", "Alex Morgan"), ("gmc_number", "7654321"), ("license_status", "full")]);
    let StoreOutcome::Accepted(id) = eco.issue_credential(GMC, DOCTOR, "gmc_license:1", &license).unwrap() else {
        panic!("license refused");
    };
    let stolen: HeldCredential = eco.agent(DOCTOR).unwrap().wallet.credential(&id).unwrap().clone();
    let gmc = eco.agent(GMC).unwrap().public_did.clone().unwrap();
    let ask = || vec![RequestedAttribute::new("gmc_number", AttributeRestriction::issuer(&gmc))];

    eco.connect(EDINBURGH, DOCTOR, FormationMode::Website).unwrap();
    let honest_request = eco.prepare_proof_request(EDINBURGH, ask(), None).unwrap();
    let ProofAnswer::Presented(honest) = eco.answer_proof_request(DOCTOR, &honest_request).unwrap() else {
        panic!("doctor did not present");
    };

    eco.add_holder("Mallory").unwrap();
    eco.connect(EDINBURGH, "Mallory", FormationMode::Website).unwrap();
    eco.agent_mut("Mallory").unwrap().wallet.credentials.push(stolen.clone());

    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let mut tally = TheftTally { attempts, ..TheftTally::default() };
    for attempt in 0..attempts {
        let request = eco.prepare_proof_request(EDINBURGH, ask(), None).unwrap();
        let forged = match attempt % 3 {
            0 => {
                let guess = params.random_scalar(&mut rng);
                let proof = prove_equal_secret(
                    params,
                    std::slice::from_ref(&stolen.credential.body.link_commitment),
                    &guess,
                    std::slice::from_ref(&stolen.blinding),
                    &request.link_context(),
                    &mut rng,
                )
                .unwrap();
                hand_built(&stolen, &request, proof)
            }
            1 => match eco.answer_proof_request("Mallory", &request).unwrap() {
                ProofAnswer::Presented(p) => p,
                other => panic!("thief wallet did not present: {other:?}"),
            },
            _ => hand_built(&stolen, &request, honest.link_proof.clone()),
        };
        let now = eco.clock.now();
        let result = evaluate(params, &eco.registry, &request, &forged, true, now);
        if result.accepted {
            tally.accepted += 1;
        } else if result.failed_checks() == vec![Check::Link] {
            tally.link_only += 1;
        }
    }
    tally
}

fn hand_built(stolen: &HeldCredential, request: &ProofRequest, link_proof: KnowledgeProof) -> Presentation {
    let c = &stolen.credential;
    Presentation {
        request_id: request.request_id,
        nonce: request.nonce,
        sources: vec![PresentedCredential {
            body: c.body.clone(),
            signature: c.signature.clone(),
            disclosed: vec![DisclosedAttribute {
                name: "gmc_number".into(),
                value: c.values["gmc_number"].clone(),
                salt: c.salts["gmc_number"],
            }],
        }],
        link_proof,
        mapping: vec![AttributeSource { name: "gmc_number".into(), source: 0 }],
    }
}

/// Revokes the GMC license in a finished run and adds verifications until the
/// log holds at least `min_events` events.
pub fn grow_audit_log(eco: &mut Ecosystem, min_events: usize) -> cpx::ids::CredentialId {
    let license = eco
        .agent(DOCTOR)
        .unwrap()
        .wallet
        .credentials
        .iter()
        .find(|h| h.credential.body.schema_id == "gmc_license:1")
        .expect("doctor holds a GMC license")
        .id();
    eco.revoke_credential(GMC, license, "lapsed").unwrap();
    let gmc = eco.agent(GMC).unwrap().public_did.clone().unwrap();
    while eco.audit.len() < min_events {
        eco.request_proof(EDINBURGH, DOCTOR, vec![RequestedAttribute::new("gmc_number", AttributeRestriction::issuer(&gmc))])
            .unwrap();
    }
    license
}

/// One mutated copy of `events` per (event, field) pair, each paired with the
/// index that was altered.
pub fn field_mutations(events: &[AuditEvent]) -> Vec<(u64, &'static str, Vec<AuditEvent>)> {
    let mut out = Vec::new();
    for i in 0..events.len() {
        let e = &events[i];
        let mut variants: Vec<(&'static str, AuditEvent)> = Vec::new();
        let mut m = e.clone();
        m.index += 1;
        variants.push(("index", m));
        let mut m = e.clone();
        m.timestamp = m.timestamp.plus_seconds(1);
        variants.push(("timestamp", m));
        let mut m = e.clone();
        m.actor_did = cpx::registry::Did::new(format!("{}x", e.actor_did.as_str()));
        variants.push(("actor_did", m));
        let mut m = e.clone();
        m.event_type = if e.event_type == EventType::Verified { EventType::Revoked } else { EventType::Verified };
        variants.push(("event_type", m));
        let mut m = e.clone();
        match m.payload.credential_ids.first_mut() {
            Some(id) => id.0[0] ^= 1,
            None => m.payload.credential_ids.push(cpx::ids::CredentialId([9; 16])),
        }
        variants.push(("payload.credential_ids", m));
        let mut m = e.clone();
        m.payload.request_id = match e.payload.request_id {
            Some(mut r) => {
                r.0[0] ^= 1;
                Some(r)
            }
            None => Some(Nonce([3; 16])),
        };
        variants.push(("payload.request_id", m));
        let mut m = e.clone();
        m.payload.outcome = Some(format!("{}!", e.payload.outcome.clone().unwrap_or_default()));
        variants.push(("payload.outcome", m));
        let mut m = e.clone();
        m.payload.note = Some(format!("{}!", e.payload.note.clone().unwrap_or_default()));
        variants.push(("payload.note", m));
        let mut m = e.clone();
        m.payload_digest[0] ^= 1;
        variants.push(("payload_digest", m));
        let mut m = e.clone();
        m.prev_hash[31] ^= 1;
        variants.push(("prev_hash", m));
        let mut m = e.clone();
        m.hash[5] ^= 1;
        variants.push(("hash", m));
        for (field, mutated) in variants {
            let mut log = events.to_vec();
            log[i] = mutated;
            out.push((i as u64, field, log));
        }
    }
    out
}

pub fn broken_at(status: ChainStatus) -> Option<u64> {
    match status {
        ChainStatus::Ok => None,
        ChainStatus::Broken(i) => Some(i),
    }
}

/// Brute-force view of the toy group using plain integers.
pub struct ToyOracle {
    pub params: &'static GroupParams,
    pub p: u64,
    pub q: u64,
    pub g: u64,
    pub h: u64,
    dlog: HashMap<u64, u64>,
    /// `log_g(h)`, found by exhaustion.
    pub w: u64,
}

impl ToyOracle {
    pub fn new() -> Self {
        let params = GroupParams::toy();
        let p = params.modulus().to_u64().unwrap();
        let q = params.order().to_u64().unwrap();
        let g = params.g().value().to_u64().unwrap();
        let h = params.h().value().to_u64().unwrap();
        let mut dlog = HashMap::new();
        for k in 0..q {
            dlog.insert(pow_mod(g, k, p), k);
        }
        assert_eq!(dlog.len() as u64, q, "g generates a subgroup of order q");
        let w = dlog[&h];
        ToyOracle { params, p, q, g, h, dlog, w }
    }

    pub fn log(&self, e: &GroupElement) -> u64 {
        self.dlog[&e.value().to_u64().unwrap()]
    }

    pub fn element(&self, k: u64) -> GroupElement {
        GroupElement::from_bytes(&pow_mod(self.g, k % self.q, self.p).to_be_bytes())
    }

    pub fn scalar(&self, n: u64) -> Scalar {
        self.params.scalar_from_u64(n % self.q)
    }

    pub fn num(&self, s: &Scalar) -> u64 {
        s.value().to_u64().unwrap()
    }

    pub fn inv(&self, a: u64) -> u64 {
        pow_mod(a % self.q, self.q - 2, self.q)
    }

    /// Every valid `(challenge, response)` pair for `message` under the key
    /// with discrete log `x`: one per nonce exponent `k`.
    pub fn valid_signatures(&self, pk: &GroupElement, x: u64, message: &[u8]) -> BTreeSet<(u64, u64)> {
        (0..self.q)
            .map(|k| {
                let c = self.num(&signature_challenge(self.params, pk, &self.element(k), message));
                (c, (k + self.q * self.q - c * x % self.q) % self.q)
            })
            .collect()
    }

    /// Accepts a multi-commitment proof iff the challenge is the transcript
    /// hash and every linear relation holds on the exponents.
    pub fn accepts(&self, label: &str, commitments: &[Commitment], proof: &KnowledgeProof, context: &[u8]) -> bool {
        let statement: Vec<GroupElement> = commitments.iter().map(|c| c.element().clone()).collect();
        if proof.commitment_nonce.len() != commitments.len() || proof.responses.len() != commitments.len() + 1 {
            return false;
        }
        if fiat_shamir_challenge(self.params, label, &statement, &proof.commitment_nonce, context) != proof.challenge {
            return false;
        }
        let c = self.num(&proof.challenge);
        let zs = self.num(&proof.responses[0]);
        commitments.iter().zip(&proof.commitment_nonce).zip(&proof.responses[1..]).all(|((com, t), z)| {
            (self.log(t) + c * self.log(com.element())) % self.q == (zs + self.w * self.num(z)) % self.q
        })
    }
}

impl Default for ToyOracle {
    fn default() -> Self {
        Self::new()
    }
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        exp >>= 1;
    }
    acc
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleTally {
    pub instances: usize,
    pub comparisons: usize,
    pub disagreements: usize,
    pub accepted: usize,
    pub rejected: usize,
}

impl OracleTally {
    fn record(&mut self, implementation: bool, oracle: bool) {
        self.comparisons += 1;
        if implementation != oracle {
            self.disagreements += 1;
        }
        if implementation {
            self.accepted += 1;
        } else {
            self.rejected += 1;
        }
    }
}

/// Per instance: a fresh key and message, the exhaustive valid set from the
/// oracle, and `verify_sig` run over every oracle-valid pair, the whole row
/// of responses for two challenges, and one out-of-range response.
pub fn schnorr_oracle(oracle: &ToyOracle, instances: usize, seed: u64) -> OracleTally {
    let params = oracle.params;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tally = OracleTally { instances, ..OracleTally::default() };
    for _ in 0..instances {
        let keys = keygen(params, &mut rng);
        let x = oracle.log(keys.public());
        assert_eq!(x, oracle.num(keys.secret()), "brute-force log matches the secret key");
        let message: Vec<u8> = (0..rng.gen_range(1..24)).map(|_| rng.gen()).collect();
        let valid = oracle.valid_signatures(keys.public(), x, &message);
        let check = |c: u64, s: u64| {
            let sig = SchnorrSignature { challenge: oracle.scalar(c), response: oracle.scalar(s) };
            verify_sig(params, keys.public(), &message, &sig)
        };
        let honest = sign(params, &keys, &message, &mut rng);
        tally.record(
            verify_sig(params, keys.public(), &message, &honest),
            valid.contains(&(oracle.num(&honest.challenge), oracle.num(&honest.response))),
        );
        for &(c, s) in &valid {
            tally.record(check(c, s), true);
        }
        for c in [oracle.num(&honest.challenge), rng.gen_range(0..oracle.q)] {
            for s in 0..oracle.q {
                tally.record(check(c, s), valid.contains(&(c, s)));
            }
        }
        // s + q is the same residue but not a canonical encoding.
        let wide = SchnorrSignature {
            challenge: honest.challenge.clone(),
            response: Scalar::from_bytes(&(honest.response.value() + params.order()).to_bytes_be()),
        };
        tally.record(verify_sig(params, keys.public(), &message, &wide), false);
    }
    tally
}

/// Per instance: a random opening `(s, r)`. The oracle predicts the unique
/// partner `r'` for every `s'`; `opens_to` must accept exactly those. Two
/// distinct openings must reveal `log_g(h)`, and the first few instances
/// also sweep the whole `q x q` grid.
pub fn commitment_oracle(oracle: &ToyOracle, instances: usize, seed: u64) -> OracleTally {
    let params = oracle.params;
    let q = oracle.q;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tally = OracleTally { instances, ..OracleTally::default() };
    let w_inv = oracle.inv(oracle.w);
    for instance in 0..instances {
        let (s, r) = (rng.gen_range(0..q), rng.gen_range(0..q));
        let c = commit(params, &oracle.scalar(s), &oracle.scalar(r));
        let expected = pow_mod(oracle.g, s, oracle.p) * pow_mod(oracle.h, r, oracle.p) % oracle.p;
        tally.record(c.element().value().to_u64() == Some(expected), true);
        let target = (s + oracle.w * r) % q;
        let partner = |s2: u64| (target + q - s2) % q * w_inv % q;
        for s2 in 0..q {
            let r2 = partner(s2);
            tally.record(c.opens_to(params, &oracle.scalar(s2), &oracle.scalar(r2)), true);
            tally.record(c.opens_to(params, &oracle.scalar(s2), &oracle.scalar(r2 + 1)), false);
        }
        // Extraction from two openings.
        let s2 = (s + 1 + rng.gen_range(0..q - 1)) % q;
        let r2 = partner(s2);
        let recovered = (s + q - s2) % q * oracle.inv((r2 + q - r) % q) % q;
        tally.record(recovered == oracle.w, true);
        if instance < 3 {
            let openings = (0..q)
                .flat_map(|a| (0..q).map(move |b| (a, b)))
                .filter(|&(a, b)| c.opens_to(params, &oracle.scalar(a), &oracle.scalar(b)))
                .count();
            tally.record(openings as u64 == q, true);
        }
    }
    tally
}

/// Per instance: 1 to 3 commitments whose secrets agree or not, an honest
/// proof run with the first secret, and sometimes a perturbed response.
/// `verify_equal_secret` must agree with the exponent-level oracle.
pub fn equal_secret_oracle(oracle: &ToyOracle, instances: usize, seed: u64) -> OracleTally {
    let params = oracle.params;
    let q = oracle.q;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tally = OracleTally { instances, ..OracleTally::default() };
    for _ in 0..instances {
        let n = rng.gen_range(1..=3);
        let same = rng.gen_bool(0.5);
        let s0 = rng.gen_range(0..q);
        let secrets: Vec<u64> = (0..n).map(|i| if same || i == 0 { s0 } else { rng.gen_range(0..q) }).collect();
        let blindings: Vec<Scalar> = (0..n).map(|_| oracle.scalar(rng.gen_range(0..q))).collect();
        let commitments: Vec<Commitment> =
            secrets.iter().zip(&blindings).map(|(s, r)| commit(params, &oracle.scalar(*s), r)).collect();
        let context: Vec<u8> = (0..8).map(|_| rng.gen()).collect();
        let mut proof = prove_equal_secret(params, &commitments, &oracle.scalar(s0), &blindings, &context, &mut rng).unwrap();
        if rng.gen_bool(0.3) {
            let k = rng.gen_range(0..proof.responses.len());
            proof.responses[k] = params.scalar_add(&proof.responses[k], &oracle.scalar(1));
        }
        tally.record(
            verify_equal_secret(params, &commitments, &proof, &context),
            oracle.accepts(EQUAL_SECRET_LABEL, &commitments, &proof, &context),
        );
    }
    tally
}

/// Opening proofs against the oracle, plus special soundness: two accepting
/// transcripts with one nonce and different challenges yield the secret.
pub fn opening_oracle(oracle: &ToyOracle, instances: usize, seed: u64) -> OracleTally {
    let params = oracle.params;
    let q = oracle.q;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tally = OracleTally { instances, ..OracleTally::default() };
    for _ in 0..instances {
        let (s, r) = (oracle.scalar(rng.gen_range(0..q)), oracle.scalar(rng.gen_range(0..q)));
        let c = commit(params, &s, &r);
        let context: Vec<u8> = (0..8).map(|_| rng.gen()).collect();
        let mut proof = prove_commitment_opening(params, &c, &s, &r, &context, &mut rng);
        if rng.gen_bool(0.3) {
            proof.responses[0] = params.scalar_add(&proof.responses[0], &oracle.scalar(rng.gen_range(1..q)));
        }
        tally.record(
            verify_opening_proof(params, &c, &proof, &context),
            oracle.accepts(OPENING_LABEL, std::slice::from_ref(&c), &proof, &context),
        );

        let prover = sigma::EqualSecretProver::commit(params, 1, &mut rng);
        let c1 = rng.gen_range(0..q);
        let c2 = (c1 + rng.gen_range(1..q)) % q;
        let z1 = prover.respond(params, &s, std::slice::from_ref(&r), &oracle.scalar(c1));
        let z2 = prover.respond(params, &s, std::slice::from_ref(&r), &oracle.scalar(c2));
        let both_accept = [(&z1, c1), (&z2, c2)].iter().all(|(z, ch)| {
            sigma::check_transcript(params, std::slice::from_ref(&c), prover.nonce_commitments(), &oracle.scalar(*ch), z)
        });
        let extracted = (oracle.num(&z1[0]) + q - oracle.num(&z2[0])) % q * oracle.inv((c1 + q - c2) % q) % q;
        tally.record(both_accept && extracted == oracle.num(&s), true);
    }
    tally
}
