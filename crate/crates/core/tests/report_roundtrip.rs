mod common;

use common::ba_case;
use hushrelay_core::report::{propagate_report, AesGcmCipher, IdentityCipher, LAYER_LEN};
use hushrelay_core::{run, LatencyModel, SimConfig};

#[test]
fn reconstruction_equals_ledger_on_ba_instances() {
    let mut checked = 0;
    for seed in 0..150 {
        let c = ba_case(9000 + seed);
        let cfg = SimConfig {
            seed,
            latency: LatencyModel::Uniform { lo: 1, hi: 5 },
            ..SimConfig::default()
        };
        let out = run(&c.graph, c.source, c.sink, c.value, &cfg).unwrap();
        let rep = propagate_report(&AesGcmCipher, &out, seed).unwrap();
        let rec = rep.reconstruct(&AesGcmCipher).unwrap();
        assert_eq!(rec.flow, out.flow, "seed {seed}");
        assert_eq!(rec.paths.total(), out.delivered);
        for p in &rec.paths.paths {
            let bottleneck = p.nodes.windows(2).map(|e| c.graph.capacity(e[0], e[1])).min().unwrap();
            assert!(p.value <= bottleneck);
        }
        for h in &rep.hops {
            assert_eq!(h.inbound.len() % LAYER_LEN, 0);
            assert_eq!(rep.exposure(&AesGcmCipher, h).foreign, 0);
        }
        if out.delivered > 0 {
            checked += 1;
        }
        // The transparent cipher carries the same facts.
        let plain = propagate_report(&IdentityCipher, &out, seed).unwrap();
        assert_eq!(plain.reconstruct(&IdentityCipher).unwrap().flow, rec.flow);
    }
    assert!(checked > 100);
}
