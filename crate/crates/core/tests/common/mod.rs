//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use adlab::corpus::{Exemplar, Item};
use adlab::sim::{ArmStats, Group, LatentCtrParams};

pub fn item(id: &str, category: &str, info: &str, human: &str) -> Item {
    Item {
        id: id.into(),
        category: category.into(),
        info_text: info.into(),
        human_text: human.into(),
        latent: None,
    }
}

pub fn latent_item(id: &str, info: &str, human: &str, base_ctr: f64, noise_sd: f64) -> Item {
    Item {
        latent: Some(LatentCtrParams {
            base_ctr,
            feature_weights_ref: "test-world".into(),
            noise_sd,
        }),
        ..item(id, "shoes", info, human)
    }
}

pub fn exemplar(id: &str, info: &str, ad_text: &str, structure: &str) -> Exemplar {
    Exemplar {
        id: id.into(),
        item_info: info.into(),
        ad_text: ad_text.into(),
        structure: structure.into(),
        guidance: vec!["Lead with the strongest benefit.".into()],
        style_id: format!("style-{id}"),
    }
}

pub fn arm(item: &str, text: &str, group: Group, human: bool, pv: u64, clicks: u64) -> ArmStats {
    ArmStats {
        item_id: item.into(),
        text: text.into(),
        group,
        human,
        pv,
        clicks,
    }
}

/// Both groups of one arm with the same page views.
pub fn arm_pair(item: &str, text: &str, human: bool, pv: u64, exp: u64, aa: u64) -> [ArmStats; 2] {
    [
        arm(item, text, Group::Exp, human, pv, exp),
        arm(item, text, Group::Aa, human, pv, aa),
    ]
}
