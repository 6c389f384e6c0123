use solida_core::audit::audit;
use solida_core::ledger::LedgerExport;
use solida_core::{CryptoKind, RealCrypto, SimCrypto, SlotValue};
use solida_simnet::presets::adversarial;
use solida_simnet::run_scenario;
use solida_simnet::scenario::MiningMode;

fn export(kind: CryptoKind, mining: MiningMode) -> LedgerExport {
    let mut sc = adversarial(1);
    sc.crypto = kind;
    sc.mining = mining;
    run_scenario(sc).unwrap().export
}

fn first_reconfig(e: &LedgerExport, skip: usize) -> usize {
    e.entries.iter().enumerate().filter(|(_, x)| x.value.is_reconfig()).nth(skip).unwrap().0
}

#[test]
fn flipped_signature_byte_is_caught() {
    for kind in [CryptoKind::Sim, CryptoKind::Real] {
        let mut e = export(kind, MiningMode::Rate);
        e.entries[2].cert.entries[0].sig.0[0] ^= 1;
        let err = match kind {
            CryptoKind::Sim => audit(&e, &SimCrypto),
            CryptoKind::Real => audit(&e, &RealCrypto),
        }
        .unwrap_err();
        assert_eq!(err.slot, 3, "{err:?}");
    }
}

#[test]
fn puzzle_with_f_headers_is_rejected() {
    let mut e = export(CryptoKind::Sim, MiningMode::Rate);
    // The second reconfiguration solves a non-genesis puzzle.
    let i = first_reconfig(&e, 1);
    let SlotValue::Reconfig(ev) = &mut e.entries[i].value else { unreachable!() };
    assert!(!ev.pow.puzzle.headers.is_empty());
    ev.pow.puzzle.headers.pop();
    assert!(audit(&e, &SimCrypto).is_err());
}

#[test]
fn pow_below_difficulty_is_rejected() {
    let mut e = export(CryptoKind::Sim, MiningMode::Pow);
    assert!(audit(&e, &SimCrypto).is_ok());
    let i = first_reconfig(&e, 0);
    let SlotValue::Reconfig(ev) = &mut e.entries[i].value else { unreachable!() };
    // Walk the nonce until the hash misses the threshold.
    let original = ev.pow.nonce;
    let mut rejected = false;
    for step in 1..64 {
        if let SlotValue::Reconfig(ev) = &mut e.entries[i].value {
            ev.pow.nonce = original.wrapping_add(step);
        }
        if audit(&e, &SimCrypto).is_err() {
            rejected = true;
            break;
        }
    }
    assert!(rejected);
}

#[test]
fn sim_signatures_do_not_verify_as_real_ones() {
    let e = export(CryptoKind::Sim, MiningMode::Rate);
    assert!(audit(&e, &SimCrypto).is_ok());
    assert!(audit(&e, &RealCrypto).is_err());
}
