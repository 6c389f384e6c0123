use proptest::prelude::*;
use solida_core::{CommitteeWindow, CryptoProvider, PublicKey, SimCrypto};

fn keys(n: usize, salt: u8) -> Vec<PublicKey> {
    (0..n).map(|i| SimCrypto.keypair_from_seed(&[salt, i as u8, (i >> 8) as u8]).public()).collect()
}

proptest! {
    #[test]
    fn any_two_quorums_share_f_plus_one(f in 1usize..12, a in any::<u64>(), b in any::<u64>()) {
        let n = 3 * f + 1;
        let w = CommitteeWindow::genesis(&keys(n, 0)).unwrap();
        prop_assert_eq!(w.quorum(), 2 * f + 1);
        // Two quorums as rotations of the member list.
        let pick = |off: u64| -> Vec<usize> { (0..w.quorum()).map(|i| (i + off as usize) % n).collect() };
        let (qa, qb) = (pick(a), pick(b));
        let common = qa.iter().filter(|i| qb.contains(i)).count();
        prop_assert!(common >= f + 1);
    }

    #[test]
    fn sliding_keeps_size_and_order(f in 1usize..6, joins in 1usize..20) {
        let n = 3 * f + 1;
        let mut w = CommitteeWindow::genesis(&keys(n, 1)).unwrap();
        let newcomers = keys(joins, 2);
        for (i, pk) in newcomers.iter().enumerate() {
            let oldest = *w.oldest();
            let next = w.slide(*pk).unwrap();
            prop_assert_eq!(next.n(), n);
            prop_assert_eq!(next.config(), w.config() + 1);
            prop_assert!(!next.contains(&oldest.public_key));
            prop_assert_eq!(next.newest().public_key, newcomers[i]);
            w = next;
        }
        // After n joins the genesis committee is fully replaced.
        if joins >= n {
            let last: Vec<_> = newcomers[joins - n..].to_vec();
            prop_assert_eq!(w.keys().copied().collect::<Vec<_>>(), last);
        }
    }
}
