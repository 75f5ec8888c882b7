//! Sparse LU factorization of a simplex basis with Markowitz pivot selection,
//! plus product-form eta updates between refactorizations.
//!
//! Column positions are basis positions; row indices are constraint rows.
//! `ftran` maps a row-indexed right-hand side to a position-indexed solution,
//! `btran` maps position-indexed costs to row-indexed multipliers.

const NIL: usize = usize::MAX;
const DROP_TOL: f64 = 1e-14;
const PIVOT_ABS_TOL: f64 = 1e-11;
const MARKOWITZ_REL: f64 = 0.1;
const ROW_SINGLETON_REL: f64 = 0.01;
const SEARCH_COLS: usize = 4;

/// Doubly linked buckets keyed by nonzero count.
struct Buckets {
    head: Vec<usize>,
    next: Vec<usize>,
    prev: Vec<usize>,
    count: Vec<usize>,
    live: Vec<bool>,
}

impl Buckets {
    fn new(items: usize, max_count: usize) -> Self {
        Buckets {
            head: vec![NIL; max_count + 2],
            next: vec![NIL; items],
            prev: vec![NIL; items],
            count: vec![0; items],
            live: vec![false; items],
        }
    }

    fn insert(&mut self, item: usize, cnt: usize) {
        let cnt = cnt.min(self.head.len() - 1);
        self.count[item] = cnt;
        self.live[item] = true;
        self.prev[item] = NIL;
        self.next[item] = self.head[cnt];
        if self.head[cnt] != NIL {
            self.prev[self.head[cnt]] = item;
        }
        self.head[cnt] = item;
    }

    fn remove(&mut self, item: usize) {
        if !self.live[item] {
            return;
        }
        let (p, n) = (self.prev[item], self.next[item]);
        if p != NIL {
            self.next[p] = n;
        } else {
            self.head[self.count[item]] = n;
        }
        if n != NIL {
            self.prev[n] = p;
        }
        self.live[item] = false;
    }

    fn set(&mut self, item: usize, cnt: usize) {
        if self.live[item] {
            self.remove(item);
            self.insert(item, cnt);
        }
    }

    fn first(&self, cnt: usize) -> usize {
        self.head.get(cnt).copied().unwrap_or(NIL)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Singular {
    /// Basis positions that could not be pivoted.
    pub positions: Vec<usize>,
    /// Rows left without a pivot.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Lu {
    m: usize,
    l_row: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_row: Vec<usize>,
    u_pos: Vec<usize>,
    u_diag: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    p_pos: Vec<usize>,
    p_piv: Vec<f64>,
    p_start: Vec<usize>,
    p_idx: Vec<usize>,
    p_val: Vec<f64>,
}

impl Lu {
    /// Factorizes the `m × m` matrix whose column at position `p` is `cols[p]`
    /// (sparse `(row, value)` pairs).
    pub fn factorize(m: usize, cols: &[Vec<(usize, f64)>]) -> Result<Lu, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                if v != 0.0 {
                    rows[i].push((p, v));
                    col_rows[p].push(i);
                }
            }
        }
        let mut ccount: Vec<usize> = col_rows.iter().map(|c| c.len()).collect();
        let mut cb = Buckets::new(m, m);
        let mut rb = Buckets::new(m, m);
        for p in 0..m {
            cb.insert(p, ccount[p]);
        }
        for i in 0..m {
            rb.insert(i, rows[i].len());
        }
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut lu = Lu {
            m,
            l_start: vec![0],
            u_start: vec![0],
            p_start: vec![0],
            ..Default::default()
        };
        let mut work = vec![0.0; m];
        let mut mark = vec![false; m];

        for _ in 0..m {
            let mut choice: Option<(usize, usize, f64)> = None;

            // column singletons never create fill or multipliers
            let mut p = cb.first(1);
            while p != NIL && choice.is_none() {
                let nxt = cb.next[p];
                for &i in &col_rows[p] {
                    if row_done[i] {
                        continue;
                    }
                    if let Some(&(_, v)) = rows[i].iter().find(|e| e.0 == p) {
                        if v.abs() > PIVOT_ABS_TOL {
                            choice = Some((i, p, v));
                        }
                        break;
                    }
                }
                p = nxt;
            }

            if choice.is_none() {
                let mut r = rb.first(1);
                while r != NIL && choice.is_none() {
                    let nxt = rb.next[r];
                    let (p, v) = rows[r][0];
                    let cmax = col_max(&rows, &col_rows[p], &row_done, p);
                    if v.abs() > PIVOT_ABS_TOL && v.abs() >= ROW_SINGLETON_REL * cmax {
                        choice = Some((r, p, v));
                    }
                    r = nxt;
                }
            }

            if choice.is_none() {
                let mut best_score = usize::MAX;
                let mut best_mag = 0.0;
                let mut searched = 0;
                'outer: for cnt in 1..=m {
                    let mut p = cb.first(cnt);
                    while p != NIL {
                        let cmax = col_max(&rows, &col_rows[p], &row_done, p);
                        if cmax > PIVOT_ABS_TOL {
                            for &i in &col_rows[p] {
                                if row_done[i] {
                                    continue;
                                }
                                if let Some(&(_, v)) = rows[i].iter().find(|e| e.0 == p) {
                                    if v.abs() >= MARKOWITZ_REL * cmax {
                                        let score = (rows[i].len() - 1) * (cnt - 1);
                                        if score < best_score
                                            || (score == best_score && v.abs() > best_mag)
                                        {
                                            best_score = score;
                                            best_mag = v.abs();
                                            choice = Some((i, p, v));
                                        }
                                    }
                                }
                            }
                            searched += 1;
                        }
                        if searched >= SEARCH_COLS && choice.is_some() {
                            break 'outer;
                        }
                        p = cb.next[p];
                    }
                }
            }

            let Some((r, pc, piv)) = choice else {
                let positions = (0..m).filter(|&p| !col_done[p]).collect();
                let rows_left = (0..m).filter(|&i| !row_done[i]).collect();
                return Err(Singular {
                    positions,
                    rows: rows_left,
                });
            };

            // eliminate column `pc` from the other active rows
            let pivot_row: Vec<(usize, f64)> = rows[r].clone();
            let others: Vec<usize> = col_rows[pc]
                .iter()
                .copied()
                .filter(|&i| i != r && !row_done[i])
                .collect();
            for i in others {
                let Some(a) = rows[i].iter().find(|e| e.0 == pc).map(|e| e.1) else {
                    continue;
                };
                let l = a / piv;
                lu.l_idx.push(i);
                lu.l_val.push(l);
                for &(q, v) in &rows[i] {
                    work[q] = v;
                    mark[q] = true;
                }
                for &(q, v) in &pivot_row {
                    if !mark[q] {
                        mark[q] = true;
                        work[q] = 0.0;
                        col_rows[q].push(i);
                        ccount[q] += 1;
                    }
                    work[q] -= l * v;
                }
                let mut new_row = Vec::with_capacity(rows[i].len() + pivot_row.len());
                let touched: Vec<usize> = rows[i]
                    .iter()
                    .map(|e| e.0)
                    .chain(pivot_row.iter().map(|e| e.0))
                    .collect();
                for q in touched {
                    if !mark[q] {
                        continue;
                    }
                    mark[q] = false;
                    let v = work[q];
                    if q == pc || v.abs() < DROP_TOL {
                        ccount[q] -= 1;
                    } else {
                        new_row.push((q, v));
                    }
                }
                rows[i] = new_row;
                rb.set(i, rows[i].len());
            }
            if lu.l_idx.len() > *lu.l_start.last().unwrap() {
                lu.l_row.push(r);
                lu.l_start.push(lu.l_idx.len());
            }

            lu.u_row.push(r);
            lu.u_pos.push(pc);
            lu.u_diag.push(piv);
            for &(q, v) in &pivot_row {
                if q != pc {
                    lu.u_idx.push(q);
                    lu.u_val.push(v);
                    ccount[q] -= 1;
                    cb.set(q, ccount[q]);
                }
            }
            lu.u_start.push(lu.u_idx.len());
            row_done[r] = true;
            col_done[pc] = true;
            rb.remove(r);
            cb.remove(pc);
            for &(q, _) in &rows[r] {
                if !col_done[q] {
                    cb.set(q, ccount[q]);
                }
            }
            rows[r].clear();
        }
        Ok(lu)
    }

    pub fn num_updates(&self) -> usize {
        self.p_pos.len()
    }

    /// Solves `B x = b`. Input is row-indexed, output is position-indexed.
    pub fn ftran(&self, rhs: &mut [f64]) -> Vec<f64> {
        for k in 0..self.l_row.len() {
            let br = rhs[self.l_row[k]];
            if br != 0.0 {
                for e in self.l_start[k]..self.l_start[k + 1] {
                    rhs[self.l_idx[e]] -= self.l_val[e] * br;
                }
            }
        }
        let mut x = vec![0.0; self.m];
        for k in (0..self.u_row.len()).rev() {
            let mut s = rhs[self.u_row[k]];
            for e in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[e] * x[self.u_idx[e]];
            }
            x[self.u_pos[k]] = s / self.u_diag[k];
        }
        for k in 0..self.p_pos.len() {
            let r = self.p_pos[k];
            let xr = x[r] / self.p_piv[k];
            x[r] = xr;
            if xr != 0.0 {
                for e in self.p_start[k]..self.p_start[k + 1] {
                    x[self.p_idx[e]] -= self.p_val[e] * xr;
                }
            }
        }
        x
    }

    /// Solves `Bᵀ y = c`. Input is position-indexed, output is row-indexed.
    pub fn btran(&self, cost: &mut [f64]) -> Vec<f64> {
        for k in (0..self.p_pos.len()).rev() {
            let r = self.p_pos[k];
            let mut s = cost[r];
            for e in self.p_start[k]..self.p_start[k + 1] {
                s -= self.p_val[e] * cost[self.p_idx[e]];
            }
            cost[r] = s / self.p_piv[k];
        }
        let mut z = vec![0.0; self.m];
        for k in 0..self.u_row.len() {
            let zr = cost[self.u_pos[k]] / self.u_diag[k];
            z[self.u_row[k]] = zr;
            if zr != 0.0 {
                for e in self.u_start[k]..self.u_start[k + 1] {
                    cost[self.u_idx[e]] -= self.u_val[e] * zr;
                }
            }
        }
        for k in (0..self.l_row.len()).rev() {
            let mut s = 0.0;
            for e in self.l_start[k]..self.l_start[k + 1] {
                s += self.l_val[e] * z[self.l_idx[e]];
            }
            z[self.l_row[k]] -= s;
        }
        z
    }

    /// Records the replacement of basis position `r` by a column whose
    /// transformed representation `B⁻¹a` is `alpha`.
    pub fn update(&mut self, r: usize, alpha: &[f64]) {
        self.p_pos.push(r);
        self.p_piv.push(alpha[r]);
        for (i, &v) in alpha.iter().enumerate() {
            if i != r && v.abs() > DROP_TOL {
                self.p_idx.push(i);
                self.p_val.push(v);
            }
        }
        self.p_start.push(self.p_idx.len());
    }
}

fn col_max(rows: &[Vec<(usize, f64)>], col_rows: &[usize], row_done: &[bool], p: usize) -> f64 {
    let mut mx = 0.0f64;
    for &i in col_rows {
        if row_done[i] {
            continue;
        }
        if let Some(&(_, v)) = rows[i].iter().find(|e| e.0 == p) {
            mx = mx.max(v.abs());
        }
    }
    mx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(cols: &[Vec<(usize, f64)>], x: &[f64], m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (p, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                out[i] += v * x[p];
            }
        }
        out
    }

    fn dense_tmul(cols: &[Vec<(usize, f64)>], y: &[f64]) -> Vec<f64> {
        cols.iter()
            .map(|col| col.iter().map(|&(i, v)| v * y[i]).sum())
            .collect()
    }

    fn sample() -> Vec<Vec<(usize, f64)>> {
        vec![
            vec![(0, 4.0), (2, 1.0)],
            vec![(1, -1.0)],
            vec![(0, 2.0), (1, 3.0), (3, 1.0)],
            vec![(2, 5.0), (3, 2.0)],
        ]
    }

    #[test]
    fn solves_round_trip() {
        let cols = sample();
        let lu = Lu::factorize(4, &cols).unwrap();
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let x = lu.ftran(&mut b.clone());
        let back = dense_mul(&cols, &x, 4);
        for i in 0..4 {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
        let c = vec![0.3, 1.0, -1.0, 2.0];
        let y = lu.btran(&mut c.clone());
        let back = dense_tmul(&cols, &y);
        for i in 0..4 {
            assert!((back[i] - c[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn product_form_update_matches_refactor() {
        let mut cols = sample();
        let mut lu = Lu::factorize(4, &cols).unwrap();
        let newcol = vec![(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0)];
        let mut dense = vec![0.0; 4];
        for &(i, v) in &newcol {
            dense[i] = v;
        }
        let alpha = lu.ftran(&mut dense);
        lu.update(1, &alpha);
        cols[1] = newcol;
        let b = vec![2.0, 0.0, 1.0, -1.0];
        let x = lu.ftran(&mut b.clone());
        let back = dense_mul(&cols, &x, 4);
        for i in 0..4 {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
        let c = vec![1.0, 2.0, 3.0, 4.0];
        let y = lu.btran(&mut c.clone());
        let back = dense_tmul(&cols, &y);
        for i in 0..4 {
            assert!((back[i] - c[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_reported() {
        let cols = vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 2.0), (1, 2.0)]];
        let err = Lu::factorize(2, &cols).unwrap_err();
        assert_eq!(err.positions.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
