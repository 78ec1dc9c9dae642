pub mod calibrate;
pub mod evaluate;
pub mod fit;
mod replay;
pub mod stitch;
pub mod synth;
pub mod track;
pub mod validate;

use std::collections::BTreeSet;

use crate::config::Config;

/// Every config key some command reads, found by reading all settings from
/// an empty config.
pub fn known_keys() -> BTreeSet<String> {
    let c = Config::default();
    let _ = calibrate::settings(&c);
    let _ = evaluate::settings(&c);
    let _ = fit::settings(&c);
    let _ = stitch::settings(&c);
    let _ = synth::kind(&c);
    let _ = synth::corridor_settings(&c);
    let _ = synth::seam_settings(&c);
    let _ = synth::crowd_settings(&c);
    let _ = track::settings(&c, 0);
    let _ = validate::settings(&c);
    c.effective().into_iter().map(|(k, _)| k).collect()
}
