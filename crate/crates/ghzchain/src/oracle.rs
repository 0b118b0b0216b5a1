//! Brute-force evolution on the full tensor-product space for small
//! chains, used to certify that the single-excitation subspace is closed
//! and that its dynamics match the full model exactly.
//!
//! The full space keeps every level of every site: qutrit A_1 has four
//! levels (|L>, |R>, |e>, |P>) for schemes B and C and three for scheme A,
//! qutrits A_2..A_N have three, resonators have photon occupations {0, 1}.
//! Sites are ordered A_1, B_1, A_2, ..., A_N and indexed in row-major
//! (leftmost site slowest) mixed radix. The Hamiltonian is assembled from
//! local level transitions and photon hops, not from the chain walk, so
//! agreement with the subspace model checks the reduction itself.
//!
//! Photon occupations stop at one. That truncation is exact for initial
//! states carrying at most one excitation because the model conserves the
//! excitation charge; the boundary population monitor in
//! [`compare_subspace_oracle`] verifies rather than assumes this.

use crate::dynamics::{propagate, EvolutionTrace, SchrodingerRhs, StateVector, StepControl};
use crate::model::{
    drive_compensation, pattern_level, ChainSpec, CouplingProfile, DisorderRealization, QutritLevel,
    Scheme, SubspaceBasis,
};
use crate::{C64, Error, Result};

const MAX_ORACLE_QUTRITS: usize = 4;

fn level_digit(level: QutritLevel) -> usize {
    match level {
        QutritLevel::L => 0,
        QutritLevel::R => 1,
        QutritLevel::E => 2,
        QutritLevel::P => 3,
    }
}

fn flipped(n: usize) -> QutritLevel {
    match pattern_level(n) {
        QutritLevel::R => QutritLevel::L,
        _ => QutritLevel::R,
    }
}

/// Mixed-radix layout of the truncated product space.
#[derive(Debug, Clone)]
pub struct FullSpace {
    scheme: Scheme,
    n: usize,
    /// Local dimensions for sites [A1, B1, A2, B2, ..., AN].
    dims: Vec<usize>,
    strides: Vec<usize>,
    dim: usize,
}

impl FullSpace {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        if spec.n > MAX_ORACLE_QUTRITS {
            return Err(Error::Unsupported(format!(
                "brute-force space supports at most {MAX_ORACLE_QUTRITS} qutrits, got {}",
                spec.n
            )));
        }
        let n = spec.n;
        let mut dims = Vec::with_capacity(2 * n - 1);
        for m in 1..=n {
            let qutrit_levels = if m == 1 && spec.scheme != Scheme::A {
                4
            } else {
                3
            };
            dims.push(qutrit_levels);
            if m < n {
                dims.push(2);
            }
        }
        let mut strides = vec![1usize; dims.len()];
        for i in (0..dims.len() - 1).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let dim = strides[0] * dims[0];
        Ok(FullSpace {
            scheme: spec.scheme,
            n,
            dims,
            strides,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn qutrit_site(&self, m: usize) -> usize {
        2 * (m - 1)
    }

    fn resonator_site(&self, m: usize) -> usize {
        2 * m - 1
    }

    fn digit(&self, index: usize, site: usize) -> usize {
        index / self.strides[site] % self.dims[site]
    }

    /// Index of the product state with the given qutrit levels (1-based
    /// order A_1..A_N) and at most one photon (1-based resonator).
    pub fn index_of(&self, levels: &[QutritLevel], photon: Option<usize>) -> usize {
        assert_eq!(levels.len(), self.n);
        let mut idx = 0;
        for (m, level) in levels.iter().enumerate() {
            idx += level_digit(*level) * self.strides[self.qutrit_site(m + 1)];
        }
        if let Some(r) = photon {
            idx += self.strides[self.resonator_site(r)];
        }
        idx
    }

    /// Full-space index of each subspace basis state, in basis order.
    pub fn embedding(&self, basis: &SubspaceBasis) -> Vec<usize> {
        (0..basis.dim())
            .map(|k| {
                let (levels, photon) = basis.chain_configuration(k);
                self.index_of(&levels, photon)
            })
            .collect()
    }

    /// Index of the decoupled ground configuration |G>.
    pub fn ground_index(&self) -> usize {
        let levels: Vec<QutritLevel> = (1..=self.n).map(pattern_level).collect();
        self.index_of(&levels, None)
    }

    /// Conserved excitation charge of one product state: photons plus |e>
    /// occupations, plus one for |P> on A_1 and for the flipped target
    /// level on A_N in schemes B/C (those levels hold the chain endpoints
    /// of the extended walk).
    pub fn excitation_charge(&self, index: usize) -> usize {
        let mut charge = 0;
        for m in 1..=self.n {
            let d = self.digit(index, self.qutrit_site(m));
            if d == level_digit(QutritLevel::E) {
                charge += 1;
            }
            if self.scheme != Scheme::A {
                if m == 1 && d == level_digit(QutritLevel::P) {
                    charge += 1;
                }
                if m == self.n && d == level_digit(flipped(self.n)) {
                    charge += 1;
                }
            }
        }
        for r in 1..self.n {
            charge += self.digit(index, self.resonator_site(r));
        }
        charge
    }
}

/// Time profile of one local term's coefficient.
#[derive(Debug, Clone, Copy)]
enum Envelope {
    Pulse1,
    Pulse2,
    Const,
    /// drive_compensation(delta, scale * J1(t)); the term's scale feeds
    /// the amplitude, the evaluated coefficient replaces it.
    CompensationPulse1 { delta: f64 },
    CompensationPulse2 { delta: f64 },
}

impl Envelope {
    fn eval(self, scale: f64, profile: &CouplingProfile, t: f64) -> f64 {
        match self {
            Envelope::Pulse1 => scale * profile.j1(t),
            Envelope::Pulse2 => scale * profile.j2(t),
            Envelope::Const => scale,
            Envelope::CompensationPulse1 { delta } => {
                drive_compensation(delta, scale * profile.j1(t))
            }
            Envelope::CompensationPulse2 { delta } => {
                drive_compensation(delta, scale * profile.j2(t))
            }
        }
    }
}

/// One off-diagonal local term, compiled to explicit index pairs. The
/// Hamiltonian contribution is c(t) |row><col| + h.c. with c(t) = scale *
/// envelope(t) * e^{i phase_freq t}.
#[derive(Debug, Clone)]
struct HopTerm {
    pairs: Vec<(usize, usize)>,
    envelope: Envelope,
    scale: f64,
    phase_freq: f64,
}

/// One diagonal field: coefficient envelope times a per-state weight.
#[derive(Debug, Clone)]
struct DiagTerm {
    weights: Vec<f64>,
    envelope: Envelope,
    scale: f64,
}

/// Which single-site or site-pair transition a term drives.
enum Transition {
    /// |to><from| on qutrit m (1-based).
    Qutrit {
        m: usize,
        from: QutritLevel,
        to: QutritLevel,
    },
    /// |to><from| on qutrit m together with photon creation (create =
    /// true: resonator r goes 0 -> 1 as the qutrit goes from -> to).
    QutritResonator {
        m: usize,
        from: QutritLevel,
        to: QutritLevel,
        r: usize,
        create: bool,
    },
}

/// Brute-force Hamiltonian over the truncated product space, explicit
/// drive phases (no rotating-frame diagonal). Implements the same
/// -i H(t) psi right-hand side contract as the subspace model.
pub struct FullOperator {
    space: FullSpace,
    profile: CouplingProfile,
    hops: Vec<HopTerm>,
    diags: Vec<DiagTerm>,
    /// Precomputed total decay rate / 2 per basis state.
    loss_half: Vec<f64>,
    freq: f64,
}

impl FullOperator {
    pub fn new(spec: &ChainSpec, realization: &DisorderRealization, lossy: bool) -> Result<Self> {
        spec.validate()?;
        let space = FullSpace::new(spec)?;
        let mult = &realization.multipliers;
        if mult.len() != spec.bond_count() {
            return Err(Error::Unsupported(format!(
                "realization carries {} multipliers, chain has {} bonds",
                mult.len(),
                spec.bond_count()
            )));
        }
        let n = spec.n;
        let g0 = spec.g0;
        let mut hops: Vec<HopTerm> = Vec::new();
        let mut diags: Vec<DiagTerm> = Vec::new();

        let compile = |tr: &Transition, envelope: Envelope, scale: f64, phase_freq: f64| {
            let mut pairs = Vec::new();
            for col in 0..space.dim {
                match *tr {
                    Transition::Qutrit { m, from, to } => {
                        let site = space.qutrit_site(m);
                        if space.digit(col, site) == level_digit(from) {
                            let row = (col as isize
                                + (level_digit(to) as isize - level_digit(from) as isize)
                                    * space.strides[site] as isize)
                                as usize;
                            pairs.push((row, col));
                        }
                    }
                    Transition::QutritResonator {
                        m,
                        from,
                        to,
                        r,
                        create,
                    } => {
                        let qsite = space.qutrit_site(m);
                        let rsite = space.resonator_site(r);
                        let photon_before = if create { 0 } else { 1 };
                        if space.digit(col, qsite) == level_digit(from)
                            && space.digit(col, rsite) == photon_before
                        {
                            let dphoton = if create { 1isize } else { -1isize };
                            let row = (col as isize
                                + (level_digit(to) as isize - level_digit(from) as isize)
                                    * space.strides[qsite] as isize
                                + dphoton * space.strides[rsite] as isize)
                                as usize;
                            pairs.push((row, col));
                        }
                    }
                }
            }
            HopTerm {
                pairs,
                envelope,
                scale,
                phase_freq,
            }
        };

        // Chain bonds shared by every scheme, indexed like the physical
        // chain: bond 2j couples qutrit j+1 to resonator j+1 (photon
        // emission as the qutrit drops from |e> to its flipped level),
        // bond 2j+1 couples resonator j+1 to qutrit j+2 (absorption
        // raising it from the pattern level to |e>). Resonator B_m drives
        // |L> <-> |e> on A_m and A_{m+1} for odd m, |R> <-> |e> for even
        // m. Per-scheme closures pick envelope and scale for each bond.
        let emit = |m: usize| Transition::QutritResonator {
            m,
            from: QutritLevel::E,
            to: flipped(m),
            r: m,
            create: true,
        };
        let absorb = |m: usize| Transition::QutritResonator {
            m: m + 1,
            from: pattern_level(m + 1),
            to: QutritLevel::E,
            r: m,
            create: false,
        };

        match spec.scheme {
            Scheme::A => {
                for b in 0..2 * n - 2 {
                    let tr = if b % 2 == 0 { emit(b / 2 + 1) } else { absorb(b / 2 + 1) };
                    let env = if b % 2 == 0 { Envelope::Pulse1 } else { Envelope::Pulse2 };
                    hops.push(compile(&tr, env, mult[b], 0.0));
                }
            }
            Scheme::B => {
                let (d1, d2) = (spec.delta1 * g0, spec.delta2 * g0);
                let omega = spec.omega_edge * g0;
                // Edge drives |P> <-> |e> on A_1 and |e> <-> target level
                // on A_N, detuned by d1 and d2; phases written out.
                hops.push(compile(
                    &Transition::Qutrit {
                        m: 1,
                        from: QutritLevel::P,
                        to: QutritLevel::E,
                    },
                    Envelope::Const,
                    omega,
                    d1,
                ));
                hops.push(compile(
                    &Transition::Qutrit {
                        m: n,
                        from: QutritLevel::E,
                        to: flipped(n),
                    },
                    Envelope::Const,
                    omega,
                    -d2,
                ));
                for b in 0..2 * n - 2 {
                    let tr = if b % 2 == 0 { emit(b / 2 + 1) } else { absorb(b / 2 + 1) };
                    let env = if b % 2 == 0 { Envelope::Pulse1 } else { Envelope::Pulse2 };
                    let (scale, phase) = if b == 0 {
                        (spec.jprime_scale * mult[0], -d1)
                    } else if b == 2 * n - 3 {
                        (spec.jprime_scale * mult[b], d2)
                    } else {
                        (mult[b], 0.0)
                    };
                    hops.push(compile(&tr, env, scale, phase));
                }
                // Drive-displacement compensation, identical to the
                // subspace model: constant fields on |P> and the target
                // level, envelope-tracking fields on the photon numbers of
                // the two edge resonators (nominal couplings).
                diags.push(DiagTerm {
                    weights: level_weights(&space, 1, QutritLevel::P),
                    envelope: Envelope::Const,
                    scale: drive_compensation(d1, omega),
                });
                diags.push(DiagTerm {
                    weights: level_weights(&space, n, flipped(n)),
                    envelope: Envelope::Const,
                    scale: drive_compensation(d2, omega),
                });
                diags.push(DiagTerm {
                    weights: photon_weights(&space, 1),
                    envelope: Envelope::CompensationPulse1 { delta: d1 },
                    scale: spec.jprime_scale,
                });
                diags.push(DiagTerm {
                    weights: photon_weights(&space, n - 1),
                    envelope: Envelope::CompensationPulse2 { delta: d2 },
                    scale: spec.jprime_scale,
                });
            }
            Scheme::C => {
                // Resonant edge drives following the pulse envelopes,
                // never disordered; the interior chain runs the pulses in
                // swapped roles so the extended chain alternates
                // J1, J2, J1, ... from the |P> end.
                hops.push(compile(
                    &Transition::Qutrit {
                        m: 1,
                        from: QutritLevel::P,
                        to: QutritLevel::E,
                    },
                    Envelope::Pulse1,
                    1.0,
                    0.0,
                ));
                hops.push(compile(
                    &Transition::Qutrit {
                        m: n,
                        from: QutritLevel::E,
                        to: flipped(n),
                    },
                    Envelope::Pulse2,
                    1.0,
                    0.0,
                ));
                for b in 0..2 * n - 2 {
                    let tr = if b % 2 == 0 { emit(b / 2 + 1) } else { absorb(b / 2 + 1) };
                    let env = if b % 2 == 0 { Envelope::Pulse2 } else { Envelope::Pulse1 };
                    hops.push(compile(&tr, env, mult[b], 0.0));
                }
            }
        }

        let mut loss_half = vec![0.0; space.dim];
        if lossy {
            for m in 1..=n {
                let rate = spec.gamma.at(m - 1) * g0;
                for (i, w) in level_weights(&space, m, QutritLevel::E).iter().enumerate() {
                    loss_half[i] += 0.5 * rate * w;
                }
            }
            for r in 1..n {
                let rate = spec.kappa.at(r - 1) * g0;
                for (i, w) in photon_weights(&space, r).iter().enumerate() {
                    loss_half[i] += 0.5 * rate * w;
                }
            }
        }

        let freq = hops
            .iter()
            .map(|h| {
                let amp = match h.envelope {
                    Envelope::Const => h.scale.abs(),
                    _ => g0 * h.scale.abs(),
                };
                amp.max(h.phase_freq.abs())
            })
            .fold(g0, f64::max);

        Ok(FullOperator {
            space,
            profile: spec.profile(),
            hops,
            diags,
            loss_half,
            freq,
        })
    }

    pub fn space(&self) -> &FullSpace {
        &self.space
    }

    #[cfg(test)]
    fn term_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.hops.iter().flat_map(|h| h.pairs.iter().copied())
    }
}

fn level_weights(space: &FullSpace, m: usize, level: QutritLevel) -> Vec<f64> {
    let site = space.qutrit_site(m);
    (0..space.dim)
        .map(|i| (space.digit(i, site) == level_digit(level)) as usize as f64)
        .collect()
}

fn photon_weights(space: &FullSpace, r: usize) -> Vec<f64> {
    let site = space.resonator_site(r);
    (0..space.dim)
        .map(|i| space.digit(i, site) as f64)
        .collect()
}

impl SchrodingerRhs for FullOperator {
    fn dim(&self) -> usize {
        self.space.dim
    }

    fn rhs(&self, t: f64, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = C64::new(-self.loss_half[i], 0.0) * x[i];
        }
        for d in &self.diags {
            let c = d.envelope.eval(d.scale, &self.profile, t);
            if c == 0.0 {
                continue;
            }
            let mi = C64::new(0.0, -c);
            for (i, w) in d.weights.iter().enumerate() {
                if *w != 0.0 {
                    y[i] += mi * *w * x[i];
                }
            }
        }
        for h in &self.hops {
            let amp = h.envelope.eval(h.scale, &self.profile, t);
            let c = if h.phase_freq == 0.0 {
                C64::new(amp, 0.0)
            } else {
                C64::from_polar(amp, h.phase_freq * t)
            };
            let mic = C64::new(0.0, -1.0) * c;
            let mic_conj = C64::new(0.0, -1.0) * c.conj();
            for &(row, col) in &h.pairs {
                y[row] += mic * x[col];
                y[col] += mic_conj * x[row];
            }
        }
    }

    fn frequency_scale(&self) -> f64 {
        self.freq
    }
}

/// One component of a restricted initial state: a product configuration
/// with an amplitude.
#[derive(Debug, Clone)]
pub struct ProductAmplitude {
    pub levels: Vec<QutritLevel>,
    pub photon: Option<usize>,
    pub amp: C64,
}

/// Full state matching [`crate::dynamics::ghz_initial_state`]: the ground
/// configuration and the left edge configuration in equal superposition.
pub fn ghz_initial_components(spec: &ChainSpec) -> Vec<ProductAmplitude> {
    let basis = SubspaceBasis::for_spec(spec);
    let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let (levels, photon) = basis.chain_configuration(0);
    vec![
        ProductAmplitude {
            levels: basis.ground_configuration(),
            photon: None,
            amp: r,
        },
        ProductAmplitude {
            levels,
            photon,
            amp: r,
        },
    ]
}

/// Evolve a restricted initial state in the full product space. Returns
/// the trace over the grid (states are full-space amplitude vectors; the
/// analytic ground slot is unused) and the step size.
pub fn full_hilbert_evolve(
    spec: &ChainSpec,
    realization: &DisorderRealization,
    psi0: &[ProductAmplitude],
    grid: &[f64],
    lossy: bool,
    control: StepControl,
) -> Result<(EvolutionTrace, f64, FullSpace)> {
    let op = FullOperator::new(spec, realization, lossy)?;
    let mut init = StateVector::zero(op.space.dim);
    for c in psi0 {
        init.amps[op.space.index_of(&c.levels, c.photon)] += c.amp;
    }
    let (trace, dt) = propagate(&op, &init, grid, control)?;
    Ok((trace, dt, op.space().clone()))
}

/// Everything [`compare_subspace_oracle`] measures.
#[derive(Debug, Clone)]
pub struct OracleReport {
    /// Max over time and basis states of |subspace amplitude - full
    /// amplitude|, including the ground component.
    pub max_deviation: f64,
    /// Max over time of the full-state population outside the embedded
    /// subspace plus ground.
    pub max_leakage: f64,
    /// Max over time of the population on states from which a second
    /// photon could be emitted into an occupied resonator; nonzero values
    /// would invalidate the single-photon truncation.
    pub max_cutoff_boundary: f64,
    pub dt: f64,
}

/// Evolve the GHZ protocol twice, once in the subspace and once in the
/// full product space, from matched initial states with matched steps, and
/// report the worst disagreement.
///
/// Both runs use the explicit-phase gauge: for scheme B that re-validates
/// the rotating-frame bookkeeping rather than assuming it. Disorder comes
/// from the chain's own seed (sample 0); losses are active whenever the
/// chain carries nonzero rates.
pub fn compare_subspace_oracle(spec: &ChainSpec, grid: &[f64]) -> Result<OracleReport> {
    spec.validate()?;
    let realization = DisorderRealization::sample(spec, 0);
    let basis = SubspaceBasis::for_spec(spec);
    let sub_h = crate::model::ChainHamiltonian::new(
        spec,
        &basis,
        &realization,
        true,
        crate::model::Frame::ExplicitPhase,
    )?;

    // One shared fixed step: the embedded full system is the same linear
    // ODE as the subspace one, so equal steps make the two integrations
    // agree to rounding while still resolving the fastest phase well
    // enough that each run is physically accurate on its own.
    let dt = 0.02 / sub_h.frequency_scale();
    let psi0 = crate::dynamics::ghz_initial_state(spec);
    let (sub_trace, _) = propagate(&sub_h, &psi0, grid, StepControl::Fixed { dt })?;

    let (full_trace, _, space) = full_hilbert_evolve(
        spec,
        &realization,
        &ghz_initial_components(spec),
        grid,
        true,
        StepControl::Fixed { dt },
    )?;

    let embed = space.embedding(&basis);
    let ground = space.ground_index();
    let mut inside = vec![false; space.dim];
    inside[ground] = true;
    for &i in &embed {
        inside[i] = true;
    }
    // Boundary states of the photon truncation: qutrit m in |e> while
    // resonator m already holds a photon, for every emission bond m. A
    // second emission from such a state would need the dropped two-photon
    // level, so their population must stay at zero.
    let mut boundary = vec![false; space.dim];
    for i in 0..space.dim {
        for m in 1..spec.n {
            let e = space.digit(i, space.qutrit_site(m)) == level_digit(QutritLevel::E);
            let occupied = space.digit(i, space.resonator_site(m)) == 1;
            if e && occupied {
                boundary[i] = true;
            }
        }
    }

    let mut max_deviation = 0.0f64;
    let mut max_leakage = 0.0f64;
    let mut max_boundary = 0.0f64;
    for (sub, full) in sub_trace.states.iter().zip(&full_trace.states) {
        let dev_ground = (sub.ground - full.amps[ground]).norm();
        max_deviation = max_deviation.max(dev_ground);
        for (k, &fi) in embed.iter().enumerate() {
            max_deviation = max_deviation.max((sub.amps[k] - full.amps[fi]).norm());
        }
        let mut leak = 0.0;
        let mut bnd = 0.0;
        for (i, a) in full.amps.iter().enumerate() {
            if !inside[i] {
                leak += a.norm_sqr();
            }
            if boundary[i] {
                bnd += a.norm_sqr();
            }
        }
        max_leakage = max_leakage.max(leak);
        max_boundary = max_boundary.max(bnd);
    }
    Ok(OracleReport {
        max_deviation,
        max_leakage,
        max_cutoff_boundary: max_boundary,
        dt,
    })
}
