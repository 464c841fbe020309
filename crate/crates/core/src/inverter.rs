//! Ideal two-level three-phase inverter.

use std::fmt;

use serde::{Deserialize, Serialize};

/// On/off position of the three inverter legs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SwitchState {
    bits: [u8; 3],
}

/// The eight switch positions in canonical order. Position in this array is
/// the 0-based index used for switch-count lookups and tie-breaking.
pub const SWITCH_STATES: [SwitchState; 8] = [
    SwitchState::new(1, 0, 0),
    SwitchState::new(0, 1, 0),
    SwitchState::new(0, 0, 1),
    SwitchState::new(1, 1, 0),
    SwitchState::new(0, 1, 1),
    SwitchState::new(1, 0, 1),
    SwitchState::new(0, 0, 0),
    SwitchState::new(1, 1, 1),
];

/// Published transition table, rows = previous state, columns = next state,
/// both in [`SWITCH_STATES`] order.
pub const SWITCH_COUNT_TABLE: [[u8; 8]; 8] = [
    [0, 2, 2, 1, 3, 1, 1, 2],
    [2, 0, 2, 1, 1, 3, 1, 2],
    [2, 2, 0, 3, 1, 1, 1, 2],
    [1, 1, 3, 0, 2, 2, 2, 1],
    [3, 1, 1, 2, 0, 2, 2, 1],
    [1, 3, 1, 2, 2, 0, 2, 1],
    [1, 1, 1, 2, 2, 2, 0, 3],
    [2, 2, 2, 1, 1, 1, 3, 0],
];

impl SwitchState {
    pub const ZERO: SwitchState = SwitchState::new(0, 0, 0);
    pub const ONES: SwitchState = SwitchState::new(1, 1, 1);

    /// Any nonzero argument counts as "on".
    pub const fn new(u1: u8, u2: u8, u3: u8) -> Self {
        SwitchState {
            bits: [(u1 != 0) as u8, (u2 != 0) as u8, (u3 != 0) as u8],
        }
    }

    pub const fn legs(&self) -> [u8; 3] {
        self.bits
    }

    /// 0-based position in [`SWITCH_STATES`].
    pub fn index(&self) -> usize {
        SWITCH_STATES
            .iter()
            .position(|s| s == self)
            .expect("every switch state is enumerated")
    }

    pub fn complement(&self) -> Self {
        let [a, b, c] = self.bits;
        SwitchState::new(1 - a, 1 - b, 1 - c)
    }

    pub fn is_zero_vector(&self) -> bool {
        *self == Self::ZERO || *self == Self::ONES
    }
}

impl fmt::Display for SwitchState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.bits;
        write!(f, "({a},{b},{c})")
    }
}

pub fn enumerate_states() -> [SwitchState; 8] {
    SWITCH_STATES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverterParams {
    pub vdc: f64,
}

impl InverterParams {
    /// Rectified 180 V line supply, √2·180 rounded.
    pub const DEFAULT_VDC: f64 = 255.0;
}

impl Default for InverterParams {
    fn default() -> Self {
        InverterParams {
            vdc: Self::DEFAULT_VDC,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VoltageAlphaBeta {
    pub v_as: f64,
    pub v_bs: f64,
}

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Primary α–β voltage produced by a switch position.
#[inline]
pub fn voltage(u: SwitchState, inv: &InverterParams) -> VoltageAlphaBeta {
    let [u1, u2, u3] = u.bits.map(f64::from);
    VoltageAlphaBeta {
        v_as: inv.vdc * (u1 - 0.5 * u2 - 0.5 * u3),
        v_bs: inv.vdc * SQRT3_2 * (u3 - u2),
    }
}

/// Number of legs that change position between `prev` and `next`.
#[inline]
pub fn switch_count(prev: SwitchState, next: SwitchState) -> u32 {
    prev.bits
        .iter()
        .zip(next.bits.iter())
        .map(|(a, b)| u32::from(a != b))
        .sum()
}

/// Leg-to-midpoint voltages ±Vdc/2.
pub fn phase_voltages(u: SwitchState, inv: &InverterParams) -> [f64; 3] {
    u.bits.map(|b| inv.vdc * (f64::from(b) - 0.5))
}

/// Compares [`switch_count`] against [`SWITCH_COUNT_TABLE`] for all pairs.
/// Returns the first disagreeing (row, column), if any.
pub fn self_test() -> Result<(), (usize, usize)> {
    for (i, &prev) in SWITCH_STATES.iter().enumerate() {
        for (j, &next) in SWITCH_STATES.iter().enumerate() {
            if switch_count(prev, next) != u32::from(SWITCH_COUNT_TABLE[i][j]) {
                return Err((i, j));
            }
        }
    }
    Ok(())
}

/// Amplitude-invariant inverse Clarke transform with the voltage map's sign
/// convention (leg 2 sits on the negative β side). Reporting only.
pub fn inverse_clarke(i_as: f64, i_bs: f64) -> [f64; 3] {
    [
        i_as,
        -0.5 * i_as - SQRT3_2 * i_bs,
        -0.5 * i_as + SQRT3_2 * i_bs,
    ]
}
