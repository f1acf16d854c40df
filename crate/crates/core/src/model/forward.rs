use std::sync::Arc;

use crate::autodiff::{concat_cols, Tape, Tensor, Var};
use crate::geometry::{build_neighbors, spherical_neighbors, MolecularStructure, Pair, SphericalPair};
use crate::so3::{cg_table, harmonic_tables, DegreeRange};

use super::params::coupling_paths;
use super::{ModelConfig, ModelError, ModelParams};

type Result<T> = std::result::Result<T, ModelError>;

/// Which neighborhood an attention coefficient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Local,
    NonLocal,
}

/// Which branch produced an attention coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Feature,
    Sphc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub layer: usize,
    pub kind: PairKind,
    pub branch: Branch,
    /// Head index; for the SPHC branch this is the degree.
    pub head: usize,
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
}

/// Intermediate values captured during a forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    /// `chi[0]` is the initial SPHC matrix, `chi[k]` the output of layer `k`.
    pub chi: Vec<Tensor>,
    /// Features after each layer.
    pub features: Vec<Tensor>,
    pub attention: Vec<AttentionRecord>,
    /// Spherical neighborhoods used by each layer (empty when non-local
    /// attention is off).
    pub spherical: Vec<Vec<SphericalPair>>,
    pub euclidean: Vec<Pair>,
}

/// Constant tensors derived from the configuration.
#[derive(Debug)]
pub(crate) struct Constants {
    degrees: DegreeRange,
    /// Per degree: monomial exponents and `monomials x (2l+1)` coefficients.
    harmonics: Vec<(Vec<[u32; 3]>, Arc<Tensor>)>,
    /// `nL x dim` map copying a per-degree scalar onto that degree's block.
    degree_expand: Arc<Tensor>,
    head_sum: Arc<Tensor>,
    head_expand: Arc<Tensor>,
    rbf_centers: Arc<Tensor>,
    rbf_gamma: f64,
    /// `(l1, l2, l, left expand, right expand, cg matrix)`
    couplings: Vec<(usize, usize, usize, Arc<Tensor>, Arc<Tensor>, Arc<Tensor>)>,
}

impl Constants {
    pub(crate) fn new(config: &ModelConfig) -> Constants {
        let degrees = config.degrees();
        let harmonics = degrees
            .iter()
            .map(|l| {
                let t = &harmonic_tables()[l];
                let coeffs = Tensor::from_rows(&t.coefficients);
                (t.monomials.clone(), Arc::new(coeffs))
            })
            .collect();
        let dim = degrees.dim();
        let mut degree_expand = Tensor::zeros(degrees.count(), dim);
        for l in degrees.iter() {
            let o = degrees.offset(l);
            for c in o..o + 2 * l + 1 {
                degree_expand.set(degrees.index(l), c, 1.0);
            }
        }
        let f = config.features;
        let width = f / config.heads;
        let head_sum = Tensor::from_fn(f, config.heads, |r, h| if r / width == h { 1.0 } else { 0.0 });
        let head_expand = head_sum.transpose();
        let k = config.n_rbf;
        let lo = (-config.r_cut).exp();
        let step = (1.0 - lo) / (k - 1) as f64;
        let rbf_centers = Tensor::from_fn(1, k, |_, c| lo + step * c as f64);
        let couplings = coupling_paths(degrees)
            .into_iter()
            .map(|(l1, l2, l)| {
                let (d1, d2, d3) = (2 * l1 + 1, 2 * l2 + 1, 2 * l + 1);
                let left = Tensor::from_fn(d1, d1 * d2, |a, c| if c / d2 == a { 1.0 } else { 0.0 });
                let right = Tensor::from_fn(d2, d1 * d2, |b, c| if c % d2 == b { 1.0 } else { 0.0 });
                let block = cg_table().block(l1, l2, l).expect("valid coupling path");
                let cg = Tensor::from_fn(d1 * d2, d3, |c, m| block.get(c / d2, c % d2, m));
                (l1, l2, l, Arc::new(left), Arc::new(right), Arc::new(cg))
            })
            .collect();
        Constants {
            degrees,
            harmonics,
            degree_expand: Arc::new(degree_expand),
            head_sum: Arc::new(head_sum),
            head_expand: Arc::new(head_expand),
            rbf_centers: Arc::new(rbf_centers),
            rbf_gamma: 1.0 / (2.0 * step * step),
            couplings,
        }
    }
}

/// Tape handles of the parameters, looked up by name.
pub(crate) struct ParamVars<'t, 'p> {
    params: &'p ModelParams,
    vars: &'p [Var<'t>],
}

impl<'t, 'p> ParamVars<'t, 'p> {
    pub(crate) fn new(params: &'p ModelParams, vars: &'p [Var<'t>]) -> Self {
        ParamVars { params, vars }
    }

    fn get(&self, name: &str) -> Var<'t> {
        let k = self
            .params
            .position(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        self.vars[k]
    }

    fn layer(&self, t: usize, name: &str) -> Var<'t> {
        self.get(&format!("layer{t}.{name}"))
    }
}

fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let y = x.matmul(w)?;
    Ok(y.add(b.broadcast_rows(y.shape()[0])?)?)
}

fn mlp<'t>(x: Var<'t>, w1: Var<'t>, b1: Var<'t>, w2: Var<'t>, b2: Var<'t>) -> Result<Var<'t>> {
    linear(linear(x, w1, b1)?.silu()?, w2, b2)
}

/// Real spherical harmonics of the rows of `unit` (`P x 3`), concatenated
/// over the degree range.
fn harmonics<'t>(tape: &'t Tape, consts: &Constants, unit: Var<'t>) -> Result<Var<'t>> {
    let rows = unit.shape()[0];
    let l_max = consts.degrees.l_max();
    if l_max == 0 {
        return Ok(tape.constant(Tensor::filled(rows, 1, 1.0))?);
    }
    let ones = tape.constant(Tensor::filled(rows, 1, 1.0))?;
    let mut powers: Vec<Vec<Var<'t>>> = Vec::new();
    for axis in 0..3 {
        let c = unit.slice_cols(axis, 1)?;
        let mut p = vec![ones, c];
        for _ in 2..=l_max {
            let next = p.last().unwrap().mul(c)?;
            p.push(next);
        }
        powers.push(p);
    }
    let mut blocks = Vec::new();
    for (monomials, coeffs) in &consts.harmonics {
        let mut cols = Vec::with_capacity(monomials.len());
        for m in monomials {
            let mut v = powers[0][m[0] as usize];
            if m[1] > 0 {
                v = v.mul(powers[1][m[1] as usize])?;
            }
            if m[2] > 0 {
                v = v.mul(powers[2][m[2] as usize])?;
            }
            cols.push(v);
        }
        let mono = concat_cols(&cols)?;
        blocks.push(mono.matmul(tape.constant_shared(coeffs.clone())?)?);
    }
    Ok(concat_cols(&blocks)?)
}

/// Per-degree norms of the rows of `x` (`rows x dim`), as `rows x nL`.
fn degree_norms<'t>(consts: &Constants, x: Var<'t>) -> Result<Var<'t>> {
    let d = consts.degrees;
    let parts = d
        .iter()
        .map(|l| x.slice_cols(d.offset(l), 2 * l + 1)?.safe_norm_rows())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(concat_cols(&parts)?)
}

/// Broadcast a `rows x 1` column to `rows x cols`.
fn widen<'t>(x: Var<'t>, cols: usize) -> Result<Var<'t>> {
    Ok(x.broadcast_cols(cols)?)
}

/// One attention coefficient per degree: `q_i . (w_ij * k_j) / sqrt(s)` on
/// each degree's feature slice. Returns `P x nL`.
fn sphc_alpha<'t>(
    consts: &Constants,
    pv: &ParamVars<'t, '_>,
    layer: usize,
    f: Var<'t>,
    w: Var<'t>,
    ii: &Arc<[usize]>,
    jj: &Arc<[usize]>,
) -> Result<Var<'t>> {
    let d = consts.degrees;
    let slice = f.shape()[1] / d.count();
    let scale = 1.0 / (slice as f64).sqrt();
    let mut parts = Vec::new();
    for l in d.iter() {
        let k = d.index(l);
        let fl = f.slice_cols(k * slice, slice)?;
        let q = fl.matmul(pv.layer(layer, &format!("sphc.wq{l}")))?;
        let kk = fl.matmul(pv.layer(layer, &format!("sphc.wk{l}")))?;
        let qi = q.gather_shared(ii.clone())?;
        let kj = kk.gather_shared(jj.clone())?;
        let wl = w.slice_cols(k * slice, slice)?;
        parts.push(qi.mul(wl)?.mul(kj)?.sum_cols()?.scale(scale)?);
    }
    Ok(concat_cols(&parts)?)
}

fn record(
    trace: &mut Option<&mut Trace>,
    alpha: &Tensor,
    layer: usize,
    kind: PairKind,
    branch: Branch,
    heads: &[usize],
    pairs: &[(usize, usize)],
) {
    if let Some(t) = trace.as_deref_mut() {
        for (h, &head) in heads.iter().enumerate() {
            for (p, &(i, j)) in pairs.iter().enumerate() {
                t.attention.push(AttentionRecord {
                    layer,
                    kind,
                    branch,
                    head,
                    i,
                    j,
                    alpha: alpha.get(p, h),
                });
            }
        }
    }
}

/// Handles produced by a forward pass.
pub struct ForwardOutput<'t> {
    pub energy: Var<'t>,
    pub atom_energies: Var<'t>,
}

/// Records the full network on `tape` for `structure`.
///
/// `params` holds one tape handle per entry of `model_params`, in order;
/// `positions` is the `n x 3` position variable whose value must equal the
/// structure's positions.
pub(crate) fn forward<'t>(
    config: &ModelConfig,
    consts: &Constants,
    model_params: &ModelParams,
    tape: &'t Tape,
    structure: &MolecularStructure,
    params: &[Var<'t>],
    positions: Var<'t>,
    mut trace: Option<&mut Trace>,
) -> Result<ForwardOutput<'t>> {
    let pv = ParamVars::new(model_params, params);
    let n = structure.len();
    let f_width = config.features;
    let degrees = consts.degrees;
    let dim = degrees.dim();
    let nl = degrees.count();

    let pairs = build_neighbors(structure, config.r_cut)?;
    let local: Vec<(usize, usize)> = pairs.iter().map(|p| (p.i, p.j)).collect();
    let ii: Arc<[usize]> = pairs.iter().map(|p| p.i).collect();
    let jj: Arc<[usize]> = pairs.iter().map(|p| p.j).collect();
    let np = pairs.len();
    if let Some(t) = trace.as_deref_mut() {
        t.euclidean = pairs.clone();
    }

    let z_index: Vec<usize> = structure.atomic_numbers.iter().map(|&z| z as usize - 1).collect();
    let mut f = pv.get("embedding").gather(&z_index)?;
    let degree_expand = tape.constant_shared(consts.degree_expand.clone())?;

    // Pair geometry, filter inputs and the initial SPHCs.
    struct LocalGeometry<'t> {
        cut: Var<'t>,
        y: Var<'t>,
        rbf: Var<'t>,
    }
    let geo = if np > 0 {
        let rvec = positions.gather_shared(jj.clone())?.sub(positions.gather_shared(ii.clone())?)?;
        let r = rvec.norm_rows(0.0)?;
        let unit = rvec.div(widen(r, 3)?)?;
        let y = harmonics(tape, consts, unit)?;
        let cut = r
            .scale(std::f64::consts::PI / config.r_cut)?
            .cos()?
            .add_scalar(1.0)?
            .scale(0.5)?;
        let centers = tape.constant_shared(consts.rbf_centers.clone())?.broadcast_rows(np)?;
        let k = config.n_rbf;
        let rbf = widen(r.neg()?.exp()?, k)?
            .sub(centers)?
            .powi(2)?
            .scale(-consts.rbf_gamma)?
            .exp()?
            .mul(widen(cut, k)?)?;
        Some(LocalGeometry { cut, y, rbf })
    } else {
        None
    };

    let mut chi = match &geo {
        Some(g) => {
            let weighted = g.y.mul(widen(g.cut, dim)?)?;
            let sum = weighted.segment_sum_shared(ii.clone(), n)?;
            let norm = g.cut.segment_sum_shared(ii.clone(), n)?;
            let mask = Tensor::from_fn(n, 1, |r, _| if norm.value().get(r, 0) == 0.0 { 1.0 } else { 0.0 });
            let denom = norm.add(tape.constant(mask)?)?;
            sum.div(widen(denom, dim)?)?
        }
        None => tape.constant(Tensor::zeros(n, dim))?,
    };
    if let Some(t) = trace.as_deref_mut() {
        t.chi.push(chi.value().as_ref().clone());
    }

    // Ordered off-diagonal pairs for the SPHC distance matrix.
    let (all_i, all_j, all_flat): (Arc<[usize]>, Arc<[usize]>, Arc<[usize]>) = if config.use_nonlocal && n > 1 {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    a.push(i);
                    b.push(j);
                    c.push(i * n + j);
                }
            }
        }
        (a.into(), b.into(), c.into())
    } else {
        (Arc::from(vec![]), Arc::from(vec![]), Arc::from(vec![]))
    };

    for layer in 0..config.n_layers {
        let f_in = f;
        let chi_in = chi;
        let mut f_next = f_in;
        let mut chi_next = chi_in;

        let spherical_filter = |dist: Var<'t>| -> Result<Var<'t>> {
            mlp(
                dist,
                pv.layer(layer, "spherical.w1"),
                pv.layer(layer, "spherical.b1"),
                pv.layer(layer, "spherical.w2"),
                pv.layer(layer, "spherical.b2"),
            )
        };

        if let Some(g) = &geo {
            let mut w = mlp(
                g.rbf,
                pv.layer(layer, "radial.w1"),
                pv.layer(layer, "radial.b1"),
                pv.layer(layer, "radial.w2"),
                pv.layer(layer, "radial.b2"),
            )?;
            if config.use_spherical_filter {
                let dchi = chi_in.gather_shared(jj.clone())?.sub(chi_in.gather_shared(ii.clone())?)?;
                w = w.add(spherical_filter(degree_norms(consts, dchi)?)?)?;
            }

            // Feature branch: multi-head attention over Euclidean neighbors.
            let q = f_in.matmul(pv.layer(layer, "feature.wq"))?.gather_shared(ii.clone())?;
            let k = f_in.matmul(pv.layer(layer, "feature.wk"))?.gather_shared(jj.clone())?;
            let v = f_in.matmul(pv.layer(layer, "feature.wv"))?.gather_shared(jj.clone())?;
            let width = f_width / config.heads;
            let alpha = q
                .mul(w)?
                .mul(k)?
                .matmul(tape.constant_shared(consts.head_sum.clone())?)?
                .scale(1.0 / (width as f64).sqrt())?;
            let heads: Vec<usize> = (0..config.heads).collect();
            record(&mut trace, &alpha.value(), layer, PairKind::Local, Branch::Feature, &heads, &local);
            let gate = alpha
                .matmul(tape.constant_shared(consts.head_expand.clone())?)?
                .mul(widen(g.cut, f_width)?)?;
            f_next = f_next.add(gate.mul(v)?.segment_sum_shared(ii.clone(), n)?)?;

            // SPHC branch: one head per degree.
            let alpha = sphc_alpha(consts, &pv, layer, f_in, w, &ii, &jj)?;
            let degs: Vec<usize> = degrees.iter().collect();
            record(&mut trace, &alpha.value(), layer, PairKind::Local, Branch::Sphc, &degs, &local);
            let gate = alpha.matmul(degree_expand)?.mul(widen(g.cut, dim)?)?;
            chi_next = chi_next.add(gate.mul(g.y)?.segment_sum_shared(ii.clone(), n)?)?;
        }

        if config.use_nonlocal && n > 1 {
            let dist = chi_in
                .gather_shared(all_j.clone())?
                .sub(chi_in.gather_shared(all_i.clone())?)?
                .safe_norm_rows()?;
            let x = dist.segment_sum_shared(all_flat.clone(), n * n)?.reshape(n, n)?;
            let rescaled = x.softmax_rows()?.reshape(n * n, 1)?;
            let x_values = x.value();
            let selected = spherical_neighbors(x_values.data(), n, config.kappa, config.poly_order);
            if let Some(t) = trace.as_deref_mut() {
                t.spherical.push(selected.clone());
            }
            if !selected.is_empty() {
                let si: Arc<[usize]> = selected.iter().map(|p| p.i).collect();
                let sj: Arc<[usize]> = selected.iter().map(|p| p.j).collect();
                let flat: Vec<usize> = selected.iter().map(|p| p.i * n + p.j).collect();
                let p = config.poly_order as f64;
                let xs = rescaled.gather(&flat)?.scale(n as f64 / config.kappa)?;
                let weight = xs
                    .powi(config.poly_order as i32)?
                    .scale(-0.5 * (p + 1.0) * (p + 2.0))?
                    .add(xs.powi(config.poly_order as i32 + 1)?.scale(p * (p + 2.0))?)?
                    .sub(xs.powi(config.poly_order as i32 + 2)?.scale(0.5 * p * (p + 1.0))?)?
                    .add_scalar(1.0)?;
                let ns = selected.len();
                let w = if config.use_spherical_filter {
                    let dchi = chi_in.gather_shared(sj.clone())?.sub(chi_in.gather_shared(si.clone())?)?;
                    spherical_filter(degree_norms(consts, dchi)?)?
                } else {
                    tape.constant(Tensor::filled(ns, f_width, 1.0))?
                };
                let alpha = sphc_alpha(consts, &pv, layer, f_in, w, &si, &sj)?;
                let degs: Vec<usize> = degrees.iter().collect();
                let sel_pairs: Vec<(usize, usize)> = selected.iter().map(|p| (p.i, p.j)).collect();
                record(&mut trace, &alpha.value(), layer, PairKind::NonLocal, Branch::Sphc, &degs, &sel_pairs);
                let rvec = positions.gather_shared(sj.clone())?.sub(positions.gather_shared(si.clone())?)?;
                let r = rvec.norm_rows(0.0)?;
                let y = harmonics(tape, consts, rvec.div(widen(r, 3)?)?)?;
                let gate = alpha.matmul(degree_expand)?.mul(widen(weight, dim)?)?;
                chi_next = chi_next.add(gate.mul(y)?.segment_sum_shared(si, n)?)?;
            }
        }

        // Atomwise interaction.
        let f_mp = f_next;
        let chi_mp = chi_next;
        let mut mixed: Vec<Option<Var<'t>>> = vec![None; nl];
        if !consts.couplings.is_empty() {
            let k = pv.layer(layer, "coupling");
            for (c, (l1, l2, l, left, right, cg)) in consts.couplings.iter().enumerate() {
                let a = chi_mp.slice_cols(degrees.offset(*l1), 2 * l1 + 1)?;
                let b = chi_mp.slice_cols(degrees.offset(*l2), 2 * l2 + 1)?;
                let outer = a
                    .matmul(tape.constant_shared(left.clone())?)?
                    .mul(b.matmul(tape.constant_shared(right.clone())?)?)?;
                let d3 = 2 * l + 1;
                let term = outer
                    .matmul(tape.constant_shared(cg.clone())?)?
                    .mul(k.slice_cols(c, 1)?.broadcast_scalar(n, d3)?)?;
                let slot = &mut mixed[degrees.index(*l)];
                *slot = Some(match slot.take() {
                    Some(s) => s.add(term)?,
                    None => term,
                });
            }
        }
        let mut chi_tilde_parts = Vec::with_capacity(nl);
        for l in degrees.iter() {
            chi_tilde_parts.push(match mixed[degrees.index(l)] {
                Some(v) => v,
                None => tape.constant(Tensor::zeros(n, 2 * l + 1))?,
            });
        }
        let chi_tilde = concat_cols(&chi_tilde_parts)?;
        let chi_norms = degree_norms(consts, chi_mp)?;
        let tilde_norms = degree_norms(consts, chi_tilde)?;
        let hidden = mlp(
            concat_cols(&[f_mp, chi_norms, tilde_norms])?,
            pv.layer(layer, "interaction.w1"),
            pv.layer(layer, "interaction.b1"),
            pv.layer(layer, "interaction.w2"),
            pv.layer(layer, "interaction.b2"),
        )?;
        let phi1 = hidden.slice_cols(0, f_width)?;
        let phi2 = hidden.slice_cols(f_width, nl)?.matmul(degree_expand)?;
        let phi3 = tilde_norms
            .matmul(pv.layer(layer, "interaction.w3"))?
            .matmul(degree_expand)?;
        f = f_mp.add(phi1)?;
        chi = chi_mp.add(phi2.mul(chi_mp)?)?.add(phi3.mul(chi_tilde)?)?;

        if let Some(t) = trace.as_deref_mut() {
            t.chi.push(chi.value().as_ref().clone());
            t.features.push(f.value().as_ref().clone());
        }
    }

    let atom_energies = mlp(
        f,
        pv.get("output.w1"),
        pv.get("output.b1"),
        pv.get("output.w2"),
        pv.get("output.b2"),
    )?;
    let energy = atom_energies.sum_all()?;
    Ok(ForwardOutput { energy, atom_energies })
}
