//! Text prompts describing a rendered ruler for image-to-image refinement.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MATERIALS: &[&str] = &[
    "plastic",
    "wood",
    "metal",
    "glass",
    "rubber",
    "composite materials",
    "paper",
    "cardboard",
];

pub const VISUAL_APPEARANCES: &[&str] = &[
    "reflective",
    "transparent",
    "opaque",
    "matte",
    "glossy",
    "textured",
    "smooth",
    "colored",
    "patterned",
    "gradient",
    "frosted",
    "clear",
];

pub const MARK_APPEARANCES: &[&str] = &[
    "engraved",
    "printed",
    "embossed",
    "debossed",
    "stamped",
    "laser-etched",
    "painted",
    "raised",
    "indented",
    "dotted",
    "striped",
    "highlighted",
    "faded",
    "bold",
    "thin",
    "dual-color",
    "metallic",
    "contrasted",
    "glowing",
    "reflective",
];

pub const BACKGROUNDS: &[&str] = &[
    "a wooden desk",
    "white paper",
    "a blackboard",
    "metal surface",
    "a glass table",
    "concrete floor",
    "a marble countertop",
    "fabric surface",
    "a grass field",
    "sandy surface",
    "a water surface",
    "carpet",
    "tile floor",
    "a painted wall",
    "a digital screen",
    "a chalkboard",
    "cardboard sheet",
    "a leather surface",
    "a plastic sheet",
    "the sky background",
    "a blurred background",
    "none",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    /// Set when an argument is empty or not one of the listed values.
    pub flagged: bool,
}

/// `a {visual_appearance} {material} rectangle with clear {mark_appearance}
/// marks on {background}`. Empty arguments are elided; background `none`
/// drops the trailing clause.
pub fn build_prompt(material: &str, visual_appearance: &str, mark_appearance: &str, background: &str) -> Prompt {
    let listed = |v: &str, table: &[&str]| table.contains(&v);
    let flagged = !(listed(material, MATERIALS)
        && listed(visual_appearance, VISUAL_APPEARANCES)
        && listed(mark_appearance, MARK_APPEARANCES)
        && listed(background, BACKGROUNDS));

    let mut words = vec!["a"];
    words.extend([visual_appearance, material].into_iter().filter(|w| !w.is_empty()));
    words.extend(["rectangle", "with", "clear"]);
    if !mark_appearance.is_empty() {
        words.push(mark_appearance);
    }
    words.push("marks");
    if !background.is_empty() && background != "none" {
        words.extend(["on", background]);
    }
    Prompt {
        text: words.join(" "),
        flagged,
    }
}

pub fn random_prompt<R: Rng>(rng: &mut R) -> Prompt {
    let pick = |rng: &mut R, t: &[&'static str]| *t.choose(rng).expect("non-empty table");
    let m = pick(rng, MATERIALS);
    let v = pick(rng, VISUAL_APPEARANCES);
    let k = pick(rng, MARK_APPEARANCES);
    let b = pick(rng, BACKGROUNDS);
    build_prompt(m, v, k, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_substitution() {
        let p = build_prompt("plastic", "matte", "printed", "white paper");
        assert_eq!(p.text, "a matte plastic rectangle with clear printed marks on white paper");
        assert!(!p.flagged);
    }

    #[test]
    fn background_none_drops_clause() {
        let p = build_prompt("wood", "glossy", "engraved", "none");
        assert_eq!(p.text, "a glossy wood rectangle with clear engraved marks");
        assert!(!p.flagged);
    }

    #[test]
    fn empty_mark_appearance_is_elided_and_flagged() {
        let p = build_prompt("metal", "opaque", "", "carpet");
        assert_eq!(p.text, "a opaque metal rectangle with clear marks on carpet");
        assert!(p.flagged);
    }

    #[test]
    fn free_form_values_are_flagged() {
        assert!(build_prompt("granite", "matte", "printed", "carpet").flagged);
    }

    #[test]
    fn table_sizes() {
        assert_eq!(
            (MATERIALS.len(), VISUAL_APPEARANCES.len(), MARK_APPEARANCES.len(), BACKGROUNDS.len()),
            (8, 12, 20, 22)
        );
    }

    #[test]
    fn random_prompts_always_say_rectangle() {
        let mut rng = crate::seed::rng(1);
        for _ in 0..200 {
            let p = random_prompt(&mut rng);
            assert!(p.text.contains(" rectangle with clear "));
            assert!(!p.flagged);
        }
    }
}
