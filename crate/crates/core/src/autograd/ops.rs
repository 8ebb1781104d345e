use super::Var;
use crate::error::{Result, TcnnError};
use crate::tensor::Tensor;

fn same_shape(op: &str, a: &Var, b: &Var) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TcnnError::invalid(format!(
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn with_data(like: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::new(like.shape().to_vec(), data).expect("shape preserved")
}

fn map_unary(a: &Var, f: impl Fn(f64) -> f64, df: fn(f64, f64) -> f64) -> Var {
    let out: Vec<f64> = a.value().data().iter().map(|&x| f(x)).collect();
    let value = with_data(a.value(), out);
    Var::from_op(
        value,
        vec![a.clone()],
        Box::new(move |g, ps, out| {
            let x = ps[0].value().data();
            let y = out.data();
            let grad = g
                .iter()
                .zip(x.iter().zip(y))
                .map(|(g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(grad)]
        }),
    )
}

pub fn add(a: &Var, b: &Var) -> Result<Var> {
    same_shape("add", a, b)?;
    let data = a
        .value()
        .data()
        .iter()
        .zip(b.value().data())
        .map(|(x, y)| x + y)
        .collect();
    Ok(Var::from_op(
        with_data(a.value(), data),
        vec![a.clone(), b.clone()],
        Box::new(|g, _, _| vec![Some(g.to_vec()), Some(g.to_vec())]),
    ))
}

pub fn sub(a: &Var, b: &Var) -> Result<Var> {
    same_shape("sub", a, b)?;
    let data = a
        .value()
        .data()
        .iter()
        .zip(b.value().data())
        .map(|(x, y)| x - y)
        .collect();
    Ok(Var::from_op(
        with_data(a.value(), data),
        vec![a.clone(), b.clone()],
        Box::new(|g, _, _| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]),
    ))
}

/// Elementwise product.
pub fn mul(a: &Var, b: &Var) -> Result<Var> {
    same_shape("mul", a, b)?;
    let data = a
        .value()
        .data()
        .iter()
        .zip(b.value().data())
        .map(|(x, y)| x * y)
        .collect();
    Ok(Var::from_op(
        with_data(a.value(), data),
        vec![a.clone(), b.clone()],
        Box::new(|g, ps, _| {
            let (x, y) = (ps[0].value().data(), ps[1].value().data());
            let ga = ps[0]
                .requires_grad()
                .then(|| g.iter().zip(y).map(|(g, y)| g * y).collect());
            let gb = ps[1]
                .requires_grad()
                .then(|| g.iter().zip(x).map(|(g, x)| g * x).collect());
            vec![ga, gb]
        }),
    ))
}

pub fn scale(a: &Var, factor: f64) -> Var {
    let data = a.value().data().iter().map(|x| x * factor).collect();
    Var::from_op(
        with_data(a.value(), data),
        vec![a.clone()],
        Box::new(move |g, _, _| vec![Some(g.iter().map(|v| v * factor).collect())]),
    )
}

/// Repeats a one-element var into `shape`.
pub fn broadcast_scalar(a: &Var, shape: &[usize]) -> Var {
    assert!(a.value().is_scalar());
    let value = Tensor::full(shape, a.value().item());
    Var::from_op(
        value,
        vec![a.clone()],
        Box::new(|g, _, _| vec![Some(vec![g.iter().sum()])]),
    )
}

/// ReLU; the subgradient at zero is zero.
pub fn relu(a: &Var) -> Var {
    map_unary(a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
}

pub fn sigmoid(a: &Var) -> Var {
    map_unary(
        a,
        |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        },
        |_, y| y * (1.0 - y),
    )
}

pub fn tanh(a: &Var) -> Var {
    map_unary(a, f64::tanh, |_, y| 1.0 - y * y)
}

pub fn sum(a: &Var) -> Var {
    let total: f64 = a.value().data().iter().sum();
    let n = a.value().numel();
    Var::from_op(
        Tensor::scalar(total),
        vec![a.clone()],
        Box::new(move |g, _, _| vec![Some(vec![g[0]; n])]),
    )
}

/// Mean over all elements.
pub fn mean(a: &Var) -> Var {
    let n = a.value().numel();
    let total: f64 = a.value().data().iter().sum();
    Var::from_op(
        Tensor::scalar(total / n as f64),
        vec![a.clone()],
        Box::new(move |g, _, _| vec![Some(vec![g[0] / n as f64; n])]),
    )
}

pub fn reshape(a: &Var, shape: &[usize]) -> Result<Var> {
    let value = a.value().clone().reshape(shape)?;
    Ok(Var::from_op(
        value,
        vec![a.clone()],
        Box::new(|g, _, _| vec![Some(g.to_vec())]),
    ))
}

/// Concatenates rank-4 vars along the channel axis.
pub fn concat_channels(parts: &[&Var]) -> Result<Var> {
    let first = parts
        .first()
        .ok_or_else(|| TcnnError::invalid("concat_channels: no inputs"))?;
    let (n, _, h, w) = first.value().dims4()?;
    let mut channels = Vec::with_capacity(parts.len());
    for p in parts {
        let (pn, pc, ph, pw) = p.value().dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(TcnnError::invalid(format!(
                "concat_channels: incompatible shapes {:?} and {:?}",
                first.shape(),
                p.shape()
            )));
        }
        channels.push(pc);
    }
    let total_c: usize = channels.iter().sum();
    let plane = h * w;
    let mut data = Vec::with_capacity(n * total_c * plane);
    for b in 0..n {
        for (p, &c) in parts.iter().zip(&channels) {
            data.extend_from_slice(&p.value().data()[b * c * plane..(b + 1) * c * plane]);
        }
    }
    let value = Tensor::new(vec![n, total_c, h, w], data)?;
    Ok(Var::from_op(
        value,
        parts.iter().map(|p| (*p).clone()).collect(),
        Box::new(move |g, ps, _| {
            let mut grads: Vec<Vec<f64>> = channels
                .iter()
                .map(|c| Vec::with_capacity(n * c * plane))
                .collect();
            for b in 0..n {
                let mut offset = b * total_c * plane;
                for (gp, &c) in grads.iter_mut().zip(&channels) {
                    gp.extend_from_slice(&g[offset..offset + c * plane]);
                    offset += c * plane;
                }
            }
            grads
                .into_iter()
                .zip(ps)
                .map(|(g, p)| p.requires_grad().then_some(g))
                .collect()
        }),
    ))
}

/// Channels `start..start+len` of a rank-4 var.
pub fn slice_channels(a: &Var, start: usize, len: usize) -> Result<Var> {
    let (n, c, h, w) = a.value().dims4()?;
    if len == 0 || start + len > c {
        return Err(TcnnError::invalid(format!(
            "slice_channels: {start}..{} out of {c} channels",
            start + len
        )));
    }
    let plane = h * w;
    let src = a.value().data();
    let mut data = Vec::with_capacity(n * len * plane);
    for b in 0..n {
        let base = (b * c + start) * plane;
        data.extend_from_slice(&src[base..base + len * plane]);
    }
    let value = Tensor::new(vec![n, len, h, w], data)?;
    Ok(Var::from_op(
        value,
        vec![a.clone()],
        Box::new(move |g, _, _| {
            let mut grad = vec![0.0; n * c * plane];
            for b in 0..n {
                let base = (b * c + start) * plane;
                grad[base..base + len * plane]
                    .copy_from_slice(&g[b * len * plane..(b + 1) * len * plane]);
            }
            vec![Some(grad)]
        }),
    ))
}

/// Row `index` of a rank-2 var, as a rank-1 var.
pub fn select_row(a: &Var, index: usize) -> Result<Var> {
    let (rows, cols) = match *a.shape() {
        [r, c] => (r, c),
        _ => {
            return Err(TcnnError::invalid(format!(
                "select_row needs rank 2, got {:?}",
                a.shape()
            )))
        }
    };
    if index >= rows {
        return Err(TcnnError::invalid(format!(
            "select_row: row {index} of {rows}"
        )));
    }
    let data = a.value().data()[index * cols..(index + 1) * cols].to_vec();
    Ok(Var::from_op(
        Tensor::new(vec![cols], data)?,
        vec![a.clone()],
        Box::new(move |g, _, _| {
            let mut grad = vec![0.0; rows * cols];
            grad[index * cols..(index + 1) * cols].copy_from_slice(g);
            vec![Some(grad)]
        }),
    ))
}

/// Softmax over the channel axis of an `[N, C, H, W]` var.
pub fn softmax_channels(a: &Var) -> Result<Var> {
    let (n, c, h, w) = a.value().dims4()?;
    let plane = h * w;
    let x = a.value().data();
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        let base = b * c * plane;
        for px in 0..plane {
            let at = |k: usize| base + k * plane + px;
            let max = (0..c).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for k in 0..c {
                let e = (x[at(k)] - max).exp();
                out[at(k)] = e;
                denom += e;
            }
            for k in 0..c {
                out[at(k)] /= denom;
            }
        }
    }
    Ok(Var::from_op(
        with_data(a.value(), out),
        vec![a.clone()],
        Box::new(move |g, _, out| {
            let p = out.data();
            let mut grad = vec![0.0; p.len()];
            for b in 0..n {
                let base = b * c * plane;
                for px in 0..plane {
                    let at = |k: usize| base + k * plane + px;
                    let dot: f64 = (0..c).map(|k| g[at(k)] * p[at(k)]).sum();
                    for k in 0..c {
                        grad[at(k)] = p[at(k)] * (g[at(k)] - dot);
                    }
                }
            }
            vec![Some(grad)]
        }),
    ))
}

/// Mean cross-entropy between `[N, C, H, W]` logits and per-pixel class
/// targets, counting only pixels whose `valid` flag is set.
pub fn cross_entropy_channels(logits: &Var, targets: &[usize], valid: &[bool]) -> Result<Var> {
    let (n, c, h, w) = logits.value().dims4()?;
    let plane = h * w;
    if targets.len() != n * plane || valid.len() != n * plane {
        return Err(TcnnError::invalid(format!(
            "cross_entropy: {} targets / {} flags for {} pixels",
            targets.len(),
            valid.len(),
            n * plane
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
        return Err(TcnnError::invalid(format!(
            "cross_entropy: target class {bad} out of {c}"
        )));
    }
    let count = valid.iter().filter(|&&v| v).count();
    if count == 0 {
        return Err(TcnnError::Degenerate(
            "cross_entropy: every pixel is ignored".into(),
        ));
    }

    let x = logits.value().data();
    let mut probs = vec![0.0; x.len()];
    let mut total = 0.0;
    for b in 0..n {
        let base = b * c * plane;
        for px in 0..plane {
            let at = |k: usize| base + k * plane + px;
            let max = (0..c).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = (0..c).map(|k| (x[at(k)] - max).exp()).sum();
            let idx = b * plane + px;
            for k in 0..c {
                probs[at(k)] = (x[at(k)] - max).exp() / denom;
            }
            if valid[idx] {
                total += denom.ln() - (x[at(targets[idx])] - max);
            }
        }
    }
    let targets = targets.to_vec();
    let valid = valid.to_vec();
    Ok(Var::from_op(
        Tensor::scalar(total / count as f64),
        vec![logits.clone()],
        Box::new(move |g, _, _| {
            let s = g[0] / count as f64;
            let mut grad = vec![0.0; probs.len()];
            for b in 0..n {
                let base = b * c * plane;
                for px in 0..plane {
                    let idx = b * plane + px;
                    if !valid[idx] {
                        continue;
                    }
                    for k in 0..c {
                        let at = base + k * plane + px;
                        let onehot = if k == targets[idx] { 1.0 } else { 0.0 };
                        grad[at] = s * (probs[at] - onehot);
                    }
                }
            }
            vec![Some(grad)]
        }),
    ))
}

/// Euclidean distance between two equally shaped vars. The gradient at
/// `a == b` is defined as zero.
pub fn l2_distance(a: &Var, b: &Var) -> Result<Var> {
    same_shape("l2_distance", a, b)?;
    let diff: Vec<f64> = a
        .value()
        .data()
        .iter()
        .zip(b.value().data())
        .map(|(x, y)| x - y)
        .collect();
    let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    Ok(Var::from_op(
        Tensor::scalar(dist),
        vec![a.clone(), b.clone()],
        Box::new(move |g, ps, _| {
            if dist == 0.0 {
                let n = diff.len();
                return vec![Some(vec![0.0; n]), Some(vec![0.0; n])];
            }
            let s = g[0] / dist;
            let ga: Vec<f64> = diff.iter().map(|d| d * s).collect();
            let gb = ps[1].requires_grad().then(|| ga.iter().map(|v| -v).collect());
            vec![Some(ga), gb]
        }),
    ))
}

/// Mean squared difference.
pub fn mse(a: &Var, b: &Var) -> Result<Var> {
    same_shape("mse", a, b)?;
    let diff: Vec<f64> = a
        .value()
        .data()
        .iter()
        .zip(b.value().data())
        .map(|(x, y)| x - y)
        .collect();
    let n = diff.len() as f64;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok(Var::from_op(
        Tensor::scalar(value),
        vec![a.clone(), b.clone()],
        Box::new(move |g, ps, _| {
            let s = 2.0 * g[0] / n;
            let ga: Vec<f64> = diff.iter().map(|d| d * s).collect();
            let gb = ps[1].requires_grad().then(|| ga.iter().map(|v| -v).collect());
            vec![Some(ga), gb]
        }),
    ))
}
