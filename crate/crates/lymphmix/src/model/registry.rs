//! Runtime registry of the model families. The CLI and config layer select
//! a family by name; library code can also dispatch directly by
//! [`FamilyKind`].

use super::families::{
    CircHet, Joint, LvdNegBin, LvdPois, ModelFamily, PlaLmm, VaConditional, VaLmm,
};
use super::FamilyKind;
use crate::error::{Error, Result};

static PLA: PlaLmm = PlaLmm;
static LVD_POIS: LvdPois = LvdPois;
static LVD_NEGBIN: LvdNegBin = LvdNegBin;
static VA: VaLmm = VaLmm;
static CIRC: CircHet = CircHet;
static VA_COND: VaConditional = VaConditional;
static JOINT: Joint = Joint;

/// All registered families, in CLI listing order.
pub fn all() -> [&'static dyn ModelFamily; 7] {
    [&PLA, &LVD_POIS, &LVD_NEGBIN, &VA, &CIRC, &VA_COND, &JOINT]
}

/// Resolves a family by registry name.
pub fn by_name(name: &str) -> Result<&'static dyn ModelFamily> {
    all().into_iter().find(|f| f.name() == name).ok_or_else(|| {
        let known = all().map(|f| f.name()).join(", ");
        Error::UnknownFamily(name.to_string(), known)
    })
}

/// Dispatch by kind; infallible because every kind is registered.
pub fn family(kind: FamilyKind) -> &'static dyn ModelFamily {
    all()
        .into_iter()
        .find(|f| f.kind() == kind)
        .expect("every family kind is registered")
}
