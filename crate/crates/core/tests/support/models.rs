//! Small models with non-zero output layers, so predictions vary with the ray.

#![allow(dead_code)]

use prif_core::model::{PrifConfig, PrifModel};
use prif_core::nn::Mlp;
use prif_core::rays::EncodingMode;
use prif_core::rng::{normal, seeded};

fn randomize_last(m: &mut Mlp, seed: u64, scale: f64) {
    let mut rng = seeded(seed);
    let last = m.num_layers() - 1;
    let l = m.layer_mut(last);
    for w in l.weight.iter_mut() {
        *w = (normal(&mut rng) * scale) as f32;
    }
    for b in l.bias.iter_mut() {
        *b = (normal(&mut rng) * scale) as f32;
    }
}

pub fn varied_model(config: PrifConfig, seed: u64) -> PrifModel {
    let m = PrifModel::new(config, seed).unwrap();
    let mut trunk = m.trunk().clone();
    randomize_last(&mut trunk, seed ^ 0xa5, 0.3);
    let mask = m.mask_net().cloned().map(|mut n| {
        randomize_last(&mut n, seed ^ 0x5a, 0.3);
        n
    });
    let color = m.color_net().cloned().map(|mut n| {
        randomize_last(&mut n, seed ^ 0x77, 0.3);
        n
    });
    PrifModel::from_parts(config, trunk, mask, color, m.latents().to_vec()).unwrap()
}

pub fn varied_single(mode: EncodingMode, seed: u64) -> PrifModel {
    varied_model(PrifConfig::single(mode, 3, 16), seed)
}
