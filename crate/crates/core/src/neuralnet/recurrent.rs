//! GRU and LSTM cells with backpropagation through time.
//!
//! Shapes are batched and row-vector style: inputs `(B, C)`, hidden states
//! `(B, U)`, input matrices `(C, U)`, recurrent matrices `(U, U)`.

use std::collections::BTreeMap;

use super::tensor::{col_sums, matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One gate's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

impl Gate {
    pub fn zeros(c: usize, units: usize) -> Self {
        Gate { w: Tensor::zeros(&[c, units]), u: Tensor::zeros(&[units, units]), b: Tensor::zeros(&[units]) }
    }

    fn check(&self, c: usize, units: usize, name: &str) -> Result<()> {
        if self.w.shape() != [c, units] || self.u.shape() != [units, units] || self.b.shape() != [units] {
            return Err(Error::Shape(format!(
                "gate {name}: expected W ({c}, {units}), U ({units}, {units}), b ({units}); got {:?}, {:?}, {:?}",
                self.w.shape(),
                self.u.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }

    /// `x·W + h·U + b`.
    fn preact(&self, x: &[f64], h: &[f64], b: usize, c: usize, units: usize) -> Vec<f64> {
        let mut a = matmul(x, self.w.data(), b, c, units);
        let hu = matmul(h, self.u.data(), b, units, units);
        for (i, v) in a.iter_mut().enumerate() {
            *v += hu[i] + self.b.data()[i % units];
        }
        a
    }

    /// Accumulates gradients for a gate pre-activation `da` and returns the
    /// contributions to `dx` and `dh_prev`.
    fn backprop(
        &self,
        grads: &mut Gate,
        da: &[f64],
        x: &[f64],
        h: &[f64],
        dims: (usize, usize, usize),
    ) -> (Vec<f64>, Vec<f64>) {
        let (b, c, units) = dims;
        add_into(grads.w.data_mut(), &matmul_tn(x, da, b, c, units));
        add_into(grads.u.data_mut(), &matmul_tn(h, da, b, units, units));
        add_into(grads.b.data_mut(), &col_sums(da, b, units));
        (
            matmul_nt(da, self.w.data(), b, units, c),
            matmul_nt(da, self.u.data(), b, units, units),
        )
    }

    fn insert_into(&self, map: &mut BTreeMap<String, Tensor>, prefix: &str, gate: &str) {
        map.insert(format!("{prefix}.w_{gate}"), self.w.clone());
        map.insert(format!("{prefix}.u_{gate}"), self.u.clone());
        map.insert(format!("{prefix}.b_{gate}"), self.b.clone());
    }

    fn from_map(map: &BTreeMap<String, Tensor>, prefix: &str, gate: &str) -> Result<Self> {
        let get = |k: &str| {
            map.get(&format!("{prefix}.{k}_{gate}"))
                .cloned()
                .ok_or_else(|| Error::Shape(format!("missing parameter {prefix}.{k}_{gate}")))
        };
        Ok(Gate { w: get("w")?, u: get("u")?, b: get("b")? })
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn dims(x: &Tensor, h: &Tensor) -> Result<(usize, usize, usize)> {
    match (x.shape(), h.shape()) {
        ([b, c], [hb, u]) if b == hb => Ok((*b, *c, *u)),
        (xs, hs) => Err(Error::Shape(format!("recurrent step: x {xs:?} and h {hs:?} incompatible"))),
    }
}

// ---------------------------------------------------------------- GRU

/// Update (`z`), reset (`r`) and candidate (`h`) gates.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub z: Gate,
    pub r: Gate,
    pub h: Gate,
}

impl GruParams {
    pub fn zeros(c: usize, units: usize) -> Self {
        GruParams { z: Gate::zeros(c, units), r: Gate::zeros(c, units), h: Gate::zeros(c, units) }
    }

    pub fn units(&self) -> usize {
        self.z.b.len()
    }

    pub fn inputs(&self) -> usize {
        self.z.w.shape()[0]
    }

    fn check(&self, c: usize, units: usize) -> Result<()> {
        self.z.check(c, units, "z")?;
        self.r.check(c, units, "r")?;
        self.h.check(c, units, "h")
    }

    pub fn to_map(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        self.z.insert_into(&mut m, prefix, "z");
        self.r.insert_into(&mut m, prefix, "r");
        self.h.insert_into(&mut m, prefix, "h");
        m
    }

    pub fn from_map(map: &BTreeMap<String, Tensor>, prefix: &str) -> Result<Self> {
        Ok(GruParams {
            z: Gate::from_map(map, prefix, "z")?,
            r: Gate::from_map(map, prefix, "r")?,
            h: Gate::from_map(map, prefix, "h")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GruStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    rh: Vec<f64>,
    dims: (usize, usize, usize),
}

pub struct GruStepGrads {
    pub x: Tensor,
    pub h: Tensor,
    pub params: GruParams,
}

/// `z = σ(xW_z + hU_z + b_z)`, `r = σ(xW_r + hU_r + b_r)`,
/// `h̃ = tanh(xW_h + (r∘h)U_h + b_h)`, `h' = (1 − z)∘h + z∘h̃`.
pub fn gru_step(x: &Tensor, h: &Tensor, p: &GruParams) -> Result<(Tensor, GruStepCache)> {
    let (b, c, units) = dims(x, h)?;
    p.check(c, units)?;
    let (xd, hd) = (x.data(), h.data());
    let z: Vec<f64> = p.z.preact(xd, hd, b, c, units).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = p.r.preact(xd, hd, b, c, units).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(hd).map(|(r, h)| r * h).collect();
    let cand: Vec<f64> = p.h.preact(xd, &rh, b, c, units).into_iter().map(f64::tanh).collect();
    let out: Vec<f64> = (0..b * units).map(|i| (1.0 - z[i]) * hd[i] + z[i] * cand[i]).collect();
    Ok((
        Tensor::new(vec![b, units], out)?,
        GruStepCache { x: xd.to_vec(), h_prev: hd.to_vec(), z, r, cand, rh, dims: (b, c, units) },
    ))
}

pub fn gru_step_backward(cache: &GruStepCache, p: &GruParams, dh_next: &Tensor) -> Result<GruStepGrads> {
    let (b, c, units) = cache.dims;
    if dh_next.len() != b * units {
        return Err(Error::Shape("gru backward: upstream gradient has wrong size".into()));
    }
    let dy = dh_next.data();
    let n = b * units;
    let mut grads = GruParams::zeros(c, units);

    let mut dh: Vec<f64> = (0..n).map(|i| dy[i] * (1.0 - cache.z[i])).collect();
    let da_z: Vec<f64> = (0..n)
        .map(|i| dy[i] * (cache.cand[i] - cache.h_prev[i]) * cache.z[i] * (1.0 - cache.z[i]))
        .collect();
    let da_h: Vec<f64> =
        (0..n).map(|i| dy[i] * cache.z[i] * (1.0 - cache.cand[i] * cache.cand[i])).collect();

    let (mut dx, drh) = p.h.backprop(&mut grads.h, &da_h, &cache.x, &cache.rh, cache.dims);
    let da_r: Vec<f64> = (0..n)
        .map(|i| drh[i] * cache.h_prev[i] * cache.r[i] * (1.0 - cache.r[i]))
        .collect();
    for i in 0..n {
        dh[i] += drh[i] * cache.r[i];
    }
    for (gate, g, da) in [(&p.z, &mut grads.z, &da_z), (&p.r, &mut grads.r, &da_r)] {
        let (gx, gh) = gate.backprop(g, da, &cache.x, &cache.h_prev, cache.dims);
        add_into(&mut dx, &gx);
        add_into(&mut dh, &gh);
    }
    Ok(GruStepGrads {
        x: Tensor::new(vec![b, c], dx)?,
        h: Tensor::new(vec![b, units], dh)?,
        params: grads,
    })
}

fn timestep(x: &Tensor, t: usize) -> Result<Tensor> {
    let (b, steps, c) = match x.shape() {
        [b, s, c] => (*b, *s, *c),
        s => return Err(Error::Shape(format!("sequence input must be (B, T, C), got {s:?}"))),
    };
    let mut out = Vec::with_capacity(b * c);
    for i in 0..b {
        let off = (i * steps + t) * c;
        out.extend_from_slice(&x.data()[off..off + c]);
    }
    Tensor::new(vec![b, c], out)
}

fn scatter_timestep(dx: &mut [f64], step: &Tensor, t: usize, steps: usize) {
    let (b, c) = (step.shape()[0], step.shape()[1]);
    for i in 0..b {
        let off = (i * steps + t) * c;
        add_into(&mut dx[off..off + c], &step.data()[i * c..(i + 1) * c]);
    }
}

/// Runs a GRU over `(B, T, C)` from a zero state; returns the final state.
pub fn gru_sequence(x: &Tensor, p: &GruParams) -> Result<(Tensor, Vec<GruStepCache>)> {
    let steps = x.shape().get(1).copied().unwrap_or(0);
    let mut h = Tensor::zeros(&[x.shape()[0], p.units()]);
    let mut caches = Vec::with_capacity(steps);
    for t in 0..steps {
        let (next, cache) = gru_step(&timestep(x, t)?, &h, p)?;
        caches.push(cache);
        h = next;
    }
    Ok((h, caches))
}

pub fn gru_sequence_backward(
    caches: &[GruStepCache],
    p: &GruParams,
    dh_final: &Tensor,
) -> Result<(Tensor, GruParams)> {
    let (b, c, units) = caches.first().map(|c| c.dims).ok_or_else(|| Error::Shape("empty sequence".into()))?;
    let steps = caches.len();
    let mut dx = vec![0.0; b * steps * c];
    let mut dh = dh_final.clone();
    let mut total = GruParams::zeros(c, units);
    for (t, cache) in caches.iter().enumerate().rev() {
        let g = gru_step_backward(cache, p, &dh)?;
        scatter_timestep(&mut dx, &g.x, t, steps);
        for (acc, part) in [(&mut total.z, &g.params.z), (&mut total.r, &g.params.r), (&mut total.h, &g.params.h)] {
            add_into(acc.w.data_mut(), part.w.data());
            add_into(acc.u.data_mut(), part.u.data());
            add_into(acc.b.data_mut(), part.b.data());
        }
        dh = g.h;
    }
    Ok((Tensor::new(vec![b, steps, c], dx)?, total))
}

// ---------------------------------------------------------------- LSTM

/// Input (`i`), forget (`f`), output (`o`) and candidate (`g`) gates.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub i: Gate,
    pub f: Gate,
    pub o: Gate,
    pub g: Gate,
}

impl LstmParams {
    pub fn zeros(c: usize, units: usize) -> Self {
        LstmParams {
            i: Gate::zeros(c, units),
            f: Gate::zeros(c, units),
            o: Gate::zeros(c, units),
            g: Gate::zeros(c, units),
        }
    }

    pub fn units(&self) -> usize {
        self.i.b.len()
    }

    fn gates(&self) -> [&Gate; 4] {
        [&self.i, &self.f, &self.o, &self.g]
    }

    fn gates_mut(&mut self) -> [&mut Gate; 4] {
        [&mut self.i, &mut self.f, &mut self.o, &mut self.g]
    }

    fn check(&self, c: usize, units: usize) -> Result<()> {
        for (gate, name) in self.gates().into_iter().zip(["i", "f", "o", "g"]) {
            gate.check(c, units, name)?;
        }
        Ok(())
    }

    pub fn to_map(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        for (gate, name) in self.gates().into_iter().zip(["i", "f", "o", "g"]) {
            gate.insert_into(&mut m, prefix, name);
        }
        m
    }

    pub fn from_map(map: &BTreeMap<String, Tensor>, prefix: &str) -> Result<Self> {
        Ok(LstmParams {
            i: Gate::from_map(map, prefix, "i")?,
            f: Gate::from_map(map, prefix, "f")?,
            o: Gate::from_map(map, prefix, "o")?,
            g: Gate::from_map(map, prefix, "g")?,
        })
    }

    fn accumulate(&mut self, other: &LstmParams) {
        for (acc, part) in self.gates_mut().into_iter().zip(other.gates()) {
            add_into(acc.w.data_mut(), part.w.data());
            add_into(acc.u.data_mut(), part.u.data());
            add_into(acc.b.data_mut(), part.b.data());
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
    dims: (usize, usize, usize),
}

pub struct LstmStepGrads {
    pub x: Tensor,
    pub h: Tensor,
    pub c: Tensor,
    pub params: LstmParams,
}

/// `c' = f∘c + i∘g`, `h' = o∘tanh(c')` with sigmoid `i, f, o` and tanh `g`.
pub fn lstm_step(x: &Tensor, h: &Tensor, c: &Tensor, p: &LstmParams) -> Result<(Tensor, Tensor, LstmStepCache)> {
    let (b, cin, units) = dims(x, h)?;
    if c.shape() != h.shape() {
        return Err(Error::Shape(format!("lstm cell state {:?} != hidden {:?}", c.shape(), h.shape())));
    }
    p.check(cin, units)?;
    let (xd, hd) = (x.data(), h.data());
    let act = |gate: &Gate, f: fn(f64) -> f64| -> Vec<f64> {
        gate.preact(xd, hd, b, cin, units).into_iter().map(f).collect()
    };
    let i = act(&p.i, sigmoid);
    let f = act(&p.f, sigmoid);
    let o = act(&p.o, sigmoid);
    let g = act(&p.g, f64::tanh);
    let n = b * units;
    let c_new: Vec<f64> = (0..n).map(|k| f[k] * c.data()[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
    let h_new: Vec<f64> = (0..n).map(|k| o[k] * tanh_c[k]).collect();
    Ok((
        Tensor::new(vec![b, units], h_new)?,
        Tensor::new(vec![b, units], c_new)?,
        LstmStepCache {
            x: xd.to_vec(),
            h_prev: hd.to_vec(),
            c_prev: c.data().to_vec(),
            i,
            f,
            o,
            g,
            tanh_c,
            dims: (b, cin, units),
        },
    ))
}

pub fn lstm_step_backward(
    cache: &LstmStepCache,
    p: &LstmParams,
    dh_next: &Tensor,
    dc_next: &Tensor,
) -> Result<LstmStepGrads> {
    let (b, cin, units) = cache.dims;
    let n = b * units;
    if dh_next.len() != n || dc_next.len() != n {
        return Err(Error::Shape("lstm backward: upstream gradient has wrong size".into()));
    }
    let (dh_out, dc_out) = (dh_next.data(), dc_next.data());
    let mut da = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let (i, f, o, g, tc) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
        let dc = dc_out[k] + dh_out[k] * o * (1.0 - tc * tc);
        da[0][k] = dc * g * i * (1.0 - i);
        da[1][k] = dc * cache.c_prev[k] * f * (1.0 - f);
        da[2][k] = dh_out[k] * tc * o * (1.0 - o);
        da[3][k] = dc * i * (1.0 - g * g);
        dc_prev[k] = dc * f;
    }
    let mut grads = LstmParams::zeros(cin, units);
    let mut dx = vec![0.0; b * cin];
    let mut dh = vec![0.0; n];
    for ((gate, acc), d) in p.gates().into_iter().zip(grads.gates_mut()).zip(&da) {
        let (gx, gh) = gate.backprop(acc, d, &cache.x, &cache.h_prev, cache.dims);
        add_into(&mut dx, &gx);
        add_into(&mut dh, &gh);
    }
    Ok(LstmStepGrads {
        x: Tensor::new(vec![b, cin], dx)?,
        h: Tensor::new(vec![b, units], dh)?,
        c: Tensor::new(vec![b, units], dc_prev)?,
        params: grads,
    })
}

/// Runs an LSTM over the timesteps in `order`, from zero states.
fn lstm_run(x: &Tensor, p: &LstmParams, order: &[usize]) -> Result<(Tensor, Vec<LstmStepCache>)> {
    let b = x.shape()[0];
    let mut h = Tensor::zeros(&[b, p.units()]);
    let mut c = Tensor::zeros(&[b, p.units()]);
    let mut caches = Vec::with_capacity(order.len());
    for &t in order {
        let (hn, cn, cache) = lstm_step(&timestep(x, t)?, &h, &c, p)?;
        caches.push(cache);
        h = hn;
        c = cn;
    }
    Ok((h, caches))
}

fn lstm_run_backward(
    caches: &[LstmStepCache],
    order: &[usize],
    steps: usize,
    p: &LstmParams,
    dh_final: &Tensor,
) -> Result<(Vec<f64>, LstmParams)> {
    let (b, cin, units) = caches.first().map(|c| c.dims).ok_or_else(|| Error::Shape("empty sequence".into()))?;
    let mut dx = vec![0.0; b * steps * cin];
    let mut dh = dh_final.clone();
    let mut dc = Tensor::zeros(&[b, units]);
    let mut total = LstmParams::zeros(cin, units);
    for (cache, &t) in caches.iter().zip(order).rev() {
        let g = lstm_step_backward(cache, p, &dh, &dc)?;
        scatter_timestep(&mut dx, &g.x, t, steps);
        total.accumulate(&g.params);
        dh = g.h;
        dc = g.c;
    }
    Ok((dx, total))
}

#[derive(Debug, Clone)]
pub struct LstmSequenceCache {
    caches: Vec<LstmStepCache>,
    steps: usize,
}

/// Forward LSTM over `(B, T, C)`; returns the final hidden state.
pub fn lstm_sequence(x: &Tensor, p: &LstmParams) -> Result<(Tensor, LstmSequenceCache)> {
    let steps = x.shape().get(1).copied().unwrap_or(0);
    let order: Vec<usize> = (0..steps).collect();
    let (h, caches) = lstm_run(x, p, &order)?;
    Ok((h, LstmSequenceCache { caches, steps }))
}

pub fn lstm_sequence_backward(
    cache: &LstmSequenceCache,
    p: &LstmParams,
    dh_final: &Tensor,
) -> Result<(Tensor, LstmParams)> {
    let order: Vec<usize> = (0..cache.steps).collect();
    let (dx, g) = lstm_run_backward(&cache.caches, &order, cache.steps, p, dh_final)?;
    let (b, cin, _) = cache.caches[0].dims;
    Ok((Tensor::new(vec![b, cache.steps, cin], dx)?, g))
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: Vec<LstmStepCache>,
    bwd: Vec<LstmStepCache>,
    steps: usize,
}

/// Bidirectional LSTM: `[h_forward_final, h_backward_final]`, shape `(B, 2U)`.
pub fn bilstm(x: &Tensor, fwd: &LstmParams, bwd: &LstmParams) -> Result<(Tensor, BiLstmCache)> {
    let steps = x.shape().get(1).copied().unwrap_or(0);
    if steps == 0 {
        return Err(Error::Shape("bilstm needs at least one timestep".into()));
    }
    if fwd.units() != bwd.units() {
        return Err(Error::Shape("bilstm directions must have equal units".into()));
    }
    let forward: Vec<usize> = (0..steps).collect();
    let backward: Vec<usize> = (0..steps).rev().collect();
    let (hf, cf) = lstm_run(x, fwd, &forward)?;
    let (hb, cb) = lstm_run(x, bwd, &backward)?;
    let (b, u) = (x.shape()[0], fwd.units());
    let mut out = Vec::with_capacity(b * 2 * u);
    for i in 0..b {
        out.extend_from_slice(&hf.data()[i * u..(i + 1) * u]);
        out.extend_from_slice(&hb.data()[i * u..(i + 1) * u]);
    }
    Ok((Tensor::new(vec![b, 2 * u], out)?, BiLstmCache { fwd: cf, bwd: cb, steps }))
}

pub fn bilstm_backward(
    cache: &BiLstmCache,
    fwd: &LstmParams,
    bwd: &LstmParams,
    dout: &Tensor,
) -> Result<(Tensor, LstmParams, LstmParams)> {
    let (b, cin, u) = cache.fwd[0].dims;
    if dout.len() != b * 2 * u {
        return Err(Error::Shape("bilstm backward: upstream gradient has wrong size".into()));
    }
    let mut dhf = Vec::with_capacity(b * u);
    let mut dhb = Vec::with_capacity(b * u);
    for row in dout.data().chunks(2 * u) {
        dhf.extend_from_slice(&row[..u]);
        dhb.extend_from_slice(&row[u..]);
    }
    let forward: Vec<usize> = (0..cache.steps).collect();
    let backward: Vec<usize> = (0..cache.steps).rev().collect();
    let (mut dx, gf) =
        lstm_run_backward(&cache.fwd, &forward, cache.steps, fwd, &Tensor::new(vec![b, u], dhf)?)?;
    let (dxb, gb) =
        lstm_run_backward(&cache.bwd, &backward, cache.steps, bwd, &Tensor::new(vec![b, u], dhb)?)?;
    add_into(&mut dx, &dxb);
    Ok((Tensor::new(vec![b, cache.steps, cin], dx)?, gf, gb))
}
