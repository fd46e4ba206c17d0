//! Trapezoidal companion models.
//!
//! Every element is reduced to `i(n+1) = G u(n+1) + h(n)`, where `u` is the
//! element voltage and `h` collects everything known from the previous step.

/// Conductance and history current of a discretized element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompanionStamp {
    pub conductance: f64,
    pub history_current: f64,
}

/// Single passive R, L or C element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PassiveElement {
    Resistor { r: f64 },
    Inductor { l: f64 },
    Capacitor { c: f64 },
}

/// Companion stamp of a passive element starting from rest.
pub fn stamp_element(element: PassiveElement, dt: f64) -> CompanionStamp {
    let conductance = match element {
        PassiveElement::Resistor { r } => 1.0 / r,
        PassiveElement::Inductor { l } => dt / (2.0 * l),
        PassiveElement::Capacitor { c } => 2.0 * c / dt,
    };
    CompanionStamp {
        conductance,
        history_current: 0.0,
    }
}

/// Element kinds known to the solver. Two-terminal elements run from node
/// `a` to node `b` (or ground); `ratio` on a series R-L branch places an
/// ideal `ratio:1` transformer on the `b` side, so the branch voltage is
/// `v_a - ratio * v_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementKind {
    SeriesRl {
        r: f64,
        l: f64,
        ratio: f64,
    },
    SeriesRc {
        r: f64,
        c: f64,
    },
    Capacitor {
        c: f64,
    },
    /// Piecewise-linear saturable inductor to ground; `knee` in weber-turns.
    Saturable {
        l_mag: f64,
        l_sat: f64,
        knee: f64,
    },
}

/// Integration rule for one solver step. `BackwardEulerHalf` advances by
/// `dt / 2` with backward Euler; two such steps replace one trapezoidal step
/// right after a switching event to damp the trapezoidal rule's numerical
/// oscillation on discontinuities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Trapezoidal,
    BackwardEulerHalf,
}

/// Per-phase element state at the last solved step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElementState {
    /// Element current, flowing from `a` towards `b`.
    pub i: f64,
    /// Element voltage.
    pub u: f64,
    /// Series-capacitor voltage or flux linkage, depending on the kind.
    pub aux: f64,
}

impl ElementKind {
    pub fn ratio(&self) -> f64 {
        match *self {
            ElementKind::SeriesRl { ratio, .. } => ratio,
            _ => 1.0,
        }
    }

    fn saturable_segment(l_mag: f64, l_sat: f64, knee: f64, flux: f64) -> (f64, f64) {
        // Returns (inductance, current offset) of the active segment.
        if flux.abs() <= knee {
            (l_mag, 0.0)
        } else {
            (l_sat, flux.signum() * knee * (1.0 / l_mag - 1.0 / l_sat))
        }
    }

    /// Segment index for piecewise elements; changes force refactorization.
    pub fn segment(&self, s: &ElementState) -> i8 {
        match *self {
            ElementKind::Saturable { knee, .. } if s.aux > knee => 1,
            ElementKind::Saturable { knee, .. } if s.aux < -knee => -1,
            _ => 0,
        }
    }

    pub fn stamp(&self, s: &ElementState, dt: f64) -> CompanionStamp {
        self.stamp_with(s, dt, Rule::Trapezoidal)
    }

    /// Companion stamp under `rule`. Both rules share the same conductance
    /// for a given `dt`, so switching between them needs no refactorization.
    pub fn stamp_with(&self, s: &ElementState, dt: f64, rule: Rule) -> CompanionStamp {
        let trap = rule == Rule::Trapezoidal;
        match *self {
            ElementKind::SeriesRl { r, l, .. } => {
                let k = 2.0 * l / dt;
                let g = 1.0 / (r + k);
                let h = if trap {
                    g * (s.u + (k - r) * s.i)
                } else {
                    g * k * s.i
                };
                CompanionStamp {
                    conductance: g,
                    history_current: h,
                }
            }
            ElementKind::SeriesRc { r, c } => {
                let k = dt / (2.0 * c);
                let g = 1.0 / (r + k);
                let h = if trap {
                    -g * (s.aux + k * s.i)
                } else {
                    -g * s.aux
                };
                CompanionStamp {
                    conductance: g,
                    history_current: h,
                }
            }
            ElementKind::Capacitor { c } => {
                let g = 2.0 * c / dt;
                let h = if trap { -(g * s.u + s.i) } else { -g * s.u };
                CompanionStamp {
                    conductance: g,
                    history_current: h,
                }
            }
            ElementKind::Saturable { l_mag, l_sat, knee } => {
                let (l, offset) = Self::saturable_segment(l_mag, l_sat, knee, s.aux);
                let carried = if trap { 0.5 * dt * s.u } else { 0.0 };
                CompanionStamp {
                    conductance: dt / (2.0 * l),
                    history_current: offset + (s.aux + carried) / l,
                }
            }
        }
    }

    /// State after the step, given the solved element voltage.
    pub fn advance(
        &self,
        s: &ElementState,
        stamp: &CompanionStamp,
        u: f64,
        dt: f64,
    ) -> ElementState {
        self.advance_with(s, stamp, u, dt, Rule::Trapezoidal)
    }

    pub fn advance_with(
        &self,
        s: &ElementState,
        stamp: &CompanionStamp,
        u: f64,
        dt: f64,
        rule: Rule,
    ) -> ElementState {
        let i = stamp.conductance * u + stamp.history_current;
        let trap = rule == Rule::Trapezoidal;
        let aux = match *self {
            ElementKind::SeriesRc { c, .. } if trap => s.aux + dt / (2.0 * c) * (s.i + i),
            ElementKind::SeriesRc { c, .. } => s.aux + dt / (2.0 * c) * i,
            ElementKind::Saturable { .. } if trap => s.aux + 0.5 * dt * (s.u + u),
            ElementKind::Saturable { .. } => s.aux + 0.5 * dt * u,
            _ => 0.0,
        };
        ElementState { i, u, aux }
    }

    /// Stored magnetic or electric energy, joules.
    pub fn energy(&self, s: &ElementState) -> f64 {
        match *self {
            ElementKind::SeriesRl { l, .. } => 0.5 * l * s.i * s.i,
            ElementKind::SeriesRc { c, .. } => 0.5 * c * s.aux * s.aux,
            ElementKind::Capacitor { c } => 0.5 * c * s.u * s.u,
            ElementKind::Saturable { .. } => 0.0,
        }
    }
}
