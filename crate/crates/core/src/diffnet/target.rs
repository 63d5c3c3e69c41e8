use crate::diffnet::DenseNet;

/// Slow-moving copy of a network, updated by Polyak averaging.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetCopy {
    net: DenseNet,
}

impl TargetCopy {
    pub fn of(source: &DenseNet) -> Self {
        TargetCopy { net: source.clone() }
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn into_net(self) -> DenseNet {
        self.net
    }

    /// `target ← α · target + (1 − α) · source`, elementwise.
    pub fn polyak_update(&mut self, source: &DenseNet, alpha: f64) {
        assert!((0.0..=1.0).contains(&alpha), "Polyak coefficient must be in [0, 1]");
        assert_eq!(self.net.sizes(), source.sizes(), "target/source shape mismatch");
        for (t, s) in self.net.values_mut().zip(source.values()) {
            for (t, &s) in t.iter_mut().zip(s) {
                *t = alpha * *t + (1.0 - alpha) * s;
            }
        }
    }
}
