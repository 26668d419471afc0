//! Active-space integrals: FCIDUMP and dipole parsing, CVS, rescaling.
//!
//! Orbital indices are 0-based in memory and 1-based in files.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chemist-notation two-electron tensor (pq|rs), stored expanded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eri {
    n: usize,
    data: Vec<f64>,
}

impl Eri {
    pub fn zeros(n: usize) -> Self {
        Eri { n, data: vec![0.0; n * n * n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, p: usize, q: usize, r: usize, s: usize) -> usize {
        ((p * self.n + q) * self.n + r) * self.n + s
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.data[self.idx(p, q, r, s)]
    }

    /// Writes all eight permutations of (pq|rs).
    pub fn set(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        for (a, b, c, d) in [
            (p, q, r, s),
            (q, p, r, s),
            (p, q, s, r),
            (q, p, s, r),
            (r, s, p, q),
            (s, r, p, q),
            (r, s, q, p),
            (s, r, q, p),
        ] {
            let i = self.idx(a, b, c, d);
            self.data[i] = v;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// N²×N² matrix with rows (pq) and columns (rs).
    pub fn supermatrix(&self) -> DMatrix<f64> {
        let m = self.n * self.n;
        DMatrix::from_row_slice(m, m, &self.data)
    }

    pub fn from_supermatrix(n: usize, m: &DMatrix<f64>) -> Self {
        let nn = n * n;
        assert_eq!(m.nrows(), nn);
        let mut data = vec![0.0; nn * nn];
        for i in 0..nn {
            for j in 0..nn {
                data[i * nn + j] = m[(i, j)];
            }
        }
        Eri { n, data }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Eri) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Largest deviation from 8-fold permutational symmetry.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let v = self.get(p, q, r, s);
                        for w in [self.get(q, p, r, s), self.get(p, q, s, r), self.get(r, s, p, q)] {
                            worst = worst.max((v - w).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralSet {
    pub n_orbitals: usize,
    pub n_electrons: usize,
    pub ms2: i64,
    pub core_energy: f64,
    pub one_body: DMatrix<f64>,
    pub two_body: Eri,
}

impl IntegralSet {
    pub fn new(
        n_electrons: usize,
        ms2: i64,
        core_energy: f64,
        one_body: DMatrix<f64>,
        two_body: Eri,
    ) -> Result<Self> {
        let n = one_body.nrows();
        if one_body.ncols() != n || two_body.n() != n {
            return Err(Error::Argument("one- and two-body shapes disagree".into()));
        }
        let set = IntegralSet { n_orbitals: n, n_electrons, ms2, core_energy, one_body, two_body };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_orbitals;
        if !self.core_energy.is_finite()
            || self.one_body.iter().any(|x| !x.is_finite())
            || self.two_body.as_slice().iter().any(|x| !x.is_finite())
        {
            return Err(Error::Argument("non-finite integral".into()));
        }
        for p in 0..n {
            for q in 0..p {
                if (self.one_body[(p, q)] - self.one_body[(q, p)]).abs() > 1e-12 {
                    return Err(Error::Argument(format!("one-body not symmetric at ({},{})", p + 1, q + 1)));
                }
            }
        }
        Ok(())
    }

    /// (n_up, n_down) implied by NELEC and MS2.
    pub fn sector(&self) -> Result<(usize, usize)> {
        let ne = self.n_electrons as i64;
        if (ne + self.ms2) % 2 != 0 || self.ms2.abs() > ne {
            return Err(Error::Argument(format!("NELEC={} incompatible with MS2={}", ne, self.ms2)));
        }
        let up = ((ne + self.ms2) / 2) as usize;
        let down = ((ne - self.ms2) / 2) as usize;
        if up > self.n_orbitals || down > self.n_orbitals {
            return Err(Error::Argument("more electrons than spin orbitals".into()));
        }
        Ok((up, down))
    }
}

fn parse_namelist(header: &str) -> HashMap<String, String> {
    // key=value pairs separated by commas/whitespace; list values are kept raw
    let mut out = HashMap::new();
    let body = header.replace('\n', " ");
    let mut key: Option<String> = None;
    let mut val = String::new();
    for tok in body.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let upper = tok.to_ascii_uppercase();
        if upper.starts_with('&') || upper == "/" {
            continue;
        }
        if let Some((k, v)) = tok.split_once('=') {
            if let Some(k0) = key.take() {
                out.insert(k0, val.clone());
            }
            key = Some(k.trim().to_ascii_uppercase());
            val = v.trim().to_string();
        } else if key.is_some() {
            if !val.is_empty() {
                val.push(',');
            }
            val.push_str(tok);
        }
    }
    if let Some(k0) = key {
        out.insert(k0, val);
    }
    out
}

fn split_header(text: &str, tag: &str) -> Result<(String, String)> {
    let upper = text.to_ascii_uppercase();
    let start = upper
        .find(tag)
        .ok_or_else(|| Error::Format(format!("missing {tag} namelist header")))?;
    let rest = &upper[start..];
    let end_rel = rest
        .find("&END")
        .map(|i| (i, 4))
        .or_else(|| rest.find('/').map(|i| (i, 1)))
        .ok_or_else(|| Error::Format("unterminated namelist header".into()))?;
    let h_end = start + end_rel.0;
    Ok((text[start + tag.len()..h_end].to_string(), text[h_end + end_rel.1..].to_string()))
}

fn parse_record(line: &str, lineno: usize) -> Result<Option<(f64, [usize; 4])>> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('!') || t.starts_with('#') {
        return Ok(None);
    }
    let fields: Vec<&str> = t.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::Format(format!("line {lineno}: expected `value i j k l`")));
    }
    let v: f64 = fields[0]
        .replace(['D', 'd'], "e")
        .parse()
        .map_err(|_| Error::Format(format!("line {lineno}: bad value {:?}", fields[0])))?;
    let mut idx = [0usize; 4];
    for (slot, f) in idx.iter_mut().zip(&fields[1..]) {
        *slot = f.parse().map_err(|_| Error::Format(format!("line {lineno}: bad index {f:?}")))?;
    }
    Ok(Some((v, idx)))
}

fn header_usize(map: &HashMap<String, String>, key: &str) -> Result<usize> {
    map.get(key)
        .ok_or_else(|| Error::Format(format!("header lacks {key}")))?
        .parse()
        .map_err(|_| Error::Format(format!("header {key} is not an integer")))
}

fn conflict(a: f64, b: f64) -> bool {
    (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0)
}

pub fn load_fcidump(path: impl AsRef<std::path::Path>) -> Result<IntegralSet> {
    parse_fcidump(&std::fs::read_to_string(path)?)
}

pub fn parse_fcidump(text: &str) -> Result<IntegralSet> {
    let (header, body) = split_header(text, "&FCI")?;
    let map = parse_namelist(&header);
    let n = header_usize(&map, "NORB")?;
    let nelec = header_usize(&map, "NELEC")?;
    let ms2: i64 = match map.get("MS2") {
        Some(v) => v.parse().map_err(|_| Error::Format("header MS2 is not an integer".into()))?,
        None => 0,
    };
    let mut h = DMatrix::zeros(n, n);
    let mut eri = Eri::zeros(n);
    let mut seen: HashMap<[usize; 4], f64> = HashMap::new();
    let mut core = None;
    for (k, line) in body.lines().enumerate() {
        let Some((v, [i, j, a, b])) = parse_record(line, k + 1)? else { continue };
        if [i, j, a, b].iter().any(|&x| x > n) {
            return Err(Error::Format(format!("index out of range in `{}`", line.trim())));
        }
        match (i, j, a, b) {
            (0, 0, 0, 0) => {
                if let Some(c) = core {
                    if conflict(c, v) {
                        return Err(Error::Format("conflicting core energy entries".into()));
                    }
                }
                core = Some(v);
            }
            (i, j, 0, 0) if i > 0 && j > 0 => {
                let key = [i.max(j), i.min(j), 0, 0];
                if let Some(&old) = seen.get(&key) {
                    if conflict(old, v) {
                        return Err(Error::Format(format!("conflicting one-body entry ({i},{j})")));
                    }
                }
                seen.insert(key, v);
                h[(i - 1, j - 1)] = v;
                h[(j - 1, i - 1)] = v;
            }
            (i, j, a, b) if i > 0 && j > 0 && a > 0 && b > 0 => {
                let p1 = (i.max(j), i.min(j));
                let p2 = (a.max(b), a.min(b));
                let (x, y) = if p1 >= p2 { (p1, p2) } else { (p2, p1) };
                let key = [x.0, x.1, y.0, y.1];
                if let Some(&old) = seen.get(&key) {
                    if conflict(old, v) {
                        return Err(Error::Format(format!("conflicting two-body entry ({i}{j}|{a}{b})")));
                    }
                }
                seen.insert(key, v);
                eri.set(i - 1, j - 1, a - 1, b - 1, v);
            }
            // orbital-energy records `e i 0 0 0` carry no Hamiltonian data
            (_, 0, 0, 0) => {}
            _ => return Err(Error::Format(format!("unrecognized index pattern in `{}`", line.trim()))),
        }
    }
    IntegralSet::new(nelec, ms2, core.unwrap_or(0.0), h, eri)
        .map_err(|e| Error::Format(format!("invalid integrals: {e}")))
}

/// Canonical FCIDUMP text; values use shortest round-trip formatting.
pub fn write_fcidump(h: &IntegralSet) -> String {
    let n = h.n_orbitals;
    let mut s = String::new();
    let _ = writeln!(s, " &FCI NORB={},NELEC={},MS2={},", n, h.n_electrons, h.ms2);
    let _ = writeln!(s, "  ORBSYM={},", vec!["1"; n].join(","));
    let _ = writeln!(s, "  ISYM=1,\n &END");
    for i in 0..n {
        for j in 0..=i {
            for k in 0..n {
                for l in 0..=k {
                    if i * (i + 1) / 2 + j < k * (k + 1) / 2 + l {
                        continue;
                    }
                    let v = h.two_body.get(i, j, k, l);
                    if v != 0.0 {
                        let _ = writeln!(s, "{:e} {} {} {} {}", v, i + 1, j + 1, k + 1, l + 1);
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = h.one_body[(i, j)];
            if v != 0.0 {
                let _ = writeln!(s, "{:e} {} {} 0 0", v, i + 1, j + 1);
            }
        }
    }
    let _ = writeln!(s, "{:e} 0 0 0 0", h.core_energy);
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    X,
    Y,
    Z,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::X, Component::Y, Component::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["x", "y", "z"][self as usize]
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "X" => Ok(Component::X),
            "Y" => Ok(Component::Y),
            "Z" => Ok(Component::Z),
            other => Err(Error::Format(format!("unknown dipole component {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleIntegrals {
    pub n_orbitals: usize,
    pub components: [DMatrix<f64>; 3],
    pub nuclear: [f64; 3],
    /// Components absent from the source file (left at zero).
    pub missing: [bool; 3],
}

impl DipoleIntegrals {
    pub fn zeros(n: usize) -> Self {
        DipoleIntegrals {
            n_orbitals: n,
            components: [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)],
            nuclear: [0.0; 3],
            missing: [true; 3],
        }
    }

    pub fn component(&self, c: Component) -> &DMatrix<f64> {
        &self.components[c.index()]
    }

    pub fn check_against(&self, h: &IntegralSet) -> Result<()> {
        if self.n_orbitals != h.n_orbitals {
            return Err(Error::Consistency(format!(
                "dipole NORB={} but integrals NORB={}",
                self.n_orbitals, h.n_orbitals
            )));
        }
        Ok(())
    }
}

pub fn load_dipole(path: impl AsRef<std::path::Path>) -> Result<DipoleIntegrals> {
    parse_dipole(&std::fs::read_to_string(path)?)
}

pub fn parse_dipole(text: &str) -> Result<DipoleIntegrals> {
    let upper = text.to_ascii_uppercase();
    let starts: Vec<usize> = upper.match_indices("&DIP").map(|(i, _)| i).collect();
    if starts.is_empty() {
        return Err(Error::Format("no &DIP section".into()));
    }
    let mut out: Option<DipoleIntegrals> = None;
    for (si, &st) in starts.iter().enumerate() {
        let end = starts.get(si + 1).copied().unwrap_or(text.len());
        let (header, body) = split_header(&text[st..end], "&DIP")?;
        let map = parse_namelist(&header);
        let n = header_usize(&map, "NORB")?;
        let comp = Component::parse(map.get("COMP").ok_or_else(|| Error::Format("section lacks COMP".into()))?)?;
        let d = out.get_or_insert_with(|| DipoleIntegrals::zeros(n));
        if d.n_orbitals != n {
            return Err(Error::Format("sections disagree on NORB".into()));
        }
        d.missing[comp.index()] = false;
        for (k, line) in body.lines().enumerate() {
            let Some((v, [i, j, a, b])) = parse_record(line, k + 1)? else { continue };
            if a != 0 || b != 0 || i > n || j > n || (i == 0) != (j == 0) {
                return Err(Error::Format(format!("bad dipole record `{}`", line.trim())));
            }
            if i == 0 {
                d.nuclear[comp.index()] = v;
            } else {
                d.components[comp.index()][(i - 1, j - 1)] = v;
                d.components[comp.index()][(j - 1, i - 1)] = v;
            }
        }
    }
    let d = out.unwrap();
    for c in Component::ALL {
        if d.missing[c.index()] {
            log::warn!("dipole component {} missing; using zero", c.label());
        }
    }
    Ok(d)
}

pub fn write_dipole(d: &DipoleIntegrals) -> String {
    let n = d.n_orbitals;
    let mut s = String::new();
    for c in Component::ALL {
        let _ = writeln!(s, " &DIP COMP={} NORB={} &END", c.label().to_ascii_uppercase(), n);
        for i in 0..n {
            for j in 0..=i {
                let v = d.components[c.index()][(i, j)];
                if v != 0.0 {
                    let _ = writeln!(s, "{:e} {} {} 0 0", v, i + 1, j + 1);
                }
            }
        }
        let _ = writeln!(s, "{:e} 0 0 0 0", d.nuclear[c.index()]);
    }
    s
}

/// Core orbitals for the core-valence separation (0-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvsSpec {
    pub core_orbitals: BTreeSet<usize>,
}

impl CvsSpec {
    pub fn new(core: impl IntoIterator<Item = usize>) -> Self {
        CvsSpec { core_orbitals: core.into_iter().collect() }
    }

    /// From 1-based indices as written in config files.
    pub fn from_one_based(core: &[usize]) -> Result<Self> {
        if core.iter().any(|&c| c == 0) {
            return Err(Error::Argument("core orbital indices are 1-based".into()));
        }
        Ok(CvsSpec::new(core.iter().map(|c| c - 1)))
    }

    pub fn is_core(&self, p: usize) -> bool {
        self.core_orbitals.contains(&p)
    }

    /// Bit mask of core orbitals within one spin block.
    pub fn mask(&self) -> u64 {
        self.core_orbitals.iter().fold(0u64, |m, &c| m | (1u64 << c))
    }
}

pub fn apply_cvs(h: &IntegralSet, m: &DipoleIntegrals, spec: &CvsSpec) -> Result<(IntegralSet, DipoleIntegrals)> {
    let n = h.n_orbitals;
    if spec.core_orbitals.is_empty() {
        return Err(Error::Argument("empty core orbital set".into()));
    }
    if let Some(&bad) = spec.core_orbitals.iter().find(|&&c| c >= n) {
        return Err(Error::Argument(format!("core orbital {} outside [1, {}]", bad + 1, n)));
    }
    m.check_against(h)?;
    let odd = |p: usize, q: usize| spec.is_core(p) != spec.is_core(q);
    let mut out = h.clone();
    for p in 0..n {
        for q in 0..n {
            if odd(p, q) {
                out.one_body[(p, q)] = 0.0;
            }
        }
    }
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    if odd(p, q) || odd(r, s) {
                        out.two_body.set(p, q, r, s, 0.0);
                    }
                }
            }
        }
    }
    let mut dm = m.clone();
    for c in 0..3 {
        for p in 0..n {
            for q in 0..n {
                if !odd(p, q) {
                    dm.components[c][(p, q)] = 0.0;
                }
            }
        }
        dm.nuclear[c] = 0.0;
    }
    Ok((out, dm))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleWindow {
    pub center: f64,
    /// ‖H‖_ω in hartree.
    pub half_width: f64,
}

impl RescaleWindow {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::Argument("window half-width must be positive".into()));
        }
        Ok(RescaleWindow { center, half_width })
    }
}

/// Integrals of (H − center·𝟙)·scale.
pub fn rescale(h: &IntegralSet, window: &RescaleWindow, scale: f64) -> Result<IntegralSet> {
    if !(window.half_width > 0.0) {
        return Err(Error::Argument("window half-width must be positive".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::Argument(format!("scale must be positive, got {scale}")));
    }
    let mut out = h.clone();
    out.core_energy = (h.core_energy - window.center) * scale;
    out.one_body *= scale;
    for v in out.two_body.data.iter_mut() {
        *v *= scale;
    }
    Ok(out)
}

/// κ_pq = h_pq − ½ Σ_r (pr|rq).
pub fn kappa_from_standard(h: &IntegralSet) -> DMatrix<f64> {
    let n = h.n_orbitals;
    DMatrix::from_fn(n, n, |p, q| {
        h.one_body[(p, q)] - 0.5 * (0..n).map(|r| h.two_body.get(p, r, r, q)).sum::<f64>()
    })
}

/// Inverse of [`kappa_from_standard`].
pub fn standard_from_kappa(kappa: &DMatrix<f64>, eri: &Eri) -> DMatrix<f64> {
    let n = kappa.nrows();
    DMatrix::from_fn(n, n, |p, q| kappa[(p, q)] + 0.5 * (0..n).map(|r| eri.get(p, r, r, q)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_fcidump() {
        let t = "&FCI NORB=1,NELEC=2,MS2=0,&END\n0.5 1 1 1 1\n-1.0 1 1 0 0\n0.1 0 0 0 0\n";
        let h = parse_fcidump(t).unwrap();
        assert_eq!(h.n_orbitals, 1);
        assert_eq!(h.two_body.get(0, 0, 0, 0), 0.5);
        assert_eq!(h.one_body[(0, 0)], -1.0);
        assert_eq!(h.core_energy, 0.1);
    }

    #[test]
    fn eightfold_fill() {
        let t = "&FCI NORB=2,NELEC=2,&END\n0.25 1 2 1 1\n";
        let h = parse_fcidump(t).unwrap();
        for (p, q, r, s) in [(0, 1, 0, 0), (1, 0, 0, 0), (0, 0, 0, 1), (0, 0, 1, 0)] {
            assert_eq!(h.two_body.get(p, q, r, s), 0.25);
        }
    }

    #[test]
    fn header_requires_nelec() {
        assert!(matches!(parse_fcidump("&FCI NORB=2 &END\n"), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_out_of_range_and_conflicts() {
        assert!(parse_fcidump("&FCI NORB=1,NELEC=2 &END\n1.0 2 1 0 0\n").is_err());
        assert!(parse_fcidump("&FCI NORB=2,NELEC=2 &END\n1.0 1 2 1 1\n2.0 2 1 1 1\n").is_err());
        assert!(parse_fcidump("&FCI NORB=2,NELEC=2 &END\n1.0 1 2 1 1\n1.0 1 1 2 1\n").is_ok());
    }

    #[test]
    fn multiline_header_with_orbsym() {
        let t = " &FCI NORB=2,NELEC=2,MS2=0,\n  ORBSYM=1,1,\n  ISYM=1,\n &END\n 1.0D0 1 1 0 0\n";
        let h = parse_fcidump(t).unwrap();
        assert_eq!(h.n_orbitals, 2);
        assert_eq!(h.one_body[(0, 0)], 1.0);
    }

    #[test]
    fn dipole_parsing() {
        let d = parse_dipole("&DIP COMP=X NORB=3 &END\n0.3 1 2 0 0\n").unwrap();
        assert_eq!(d.components[0][(0, 1)], 0.3);
        assert_eq!(d.components[0][(1, 0)], 0.3);
        assert!(d.missing[1] && d.missing[2] && !d.missing[0]);
        let e = parse_dipole("&DIP COMP=Y NORB=2 &END\n").unwrap();
        assert!(e.components[1].iter().all(|&x| x == 0.0));
        assert!(matches!(parse_dipole("&DIP COMP=W NORB=2 &END\n"), Err(Error::Format(_))));
    }

    #[test]
    fn cvs_rules() {
        let n = 4;
        let mut h1 = DMatrix::from_element(n, n, 0.1);
        h1[(0, 1)] = 0.2;
        h1[(1, 0)] = 0.2;
        let mut eri = Eri::zeros(n);
        eri.set(0, 0, 2, 3, 0.3);
        eri.set(0, 1, 2, 3, 0.4);
        let h = IntegralSet::new(2, 0, 0.0, h1, eri).unwrap();
        let mut m = DipoleIntegrals::zeros(n);
        m.components[0] = DMatrix::from_element(n, n, 1.0);
        m.nuclear = [1.0, 2.0, 3.0];
        let (hc, mc) = apply_cvs(&h, &m, &CvsSpec::new([0])).unwrap();
        assert_eq!(hc.one_body[(0, 1)], 0.0);
        assert_eq!(hc.two_body.get(0, 0, 2, 3), 0.3);
        assert_eq!(hc.two_body.get(0, 1, 2, 3), 0.0);
        assert_eq!(mc.components[0][(0, 1)], 1.0);
        assert_eq!(mc.components[0][(1, 2)], 0.0);
        assert_eq!(mc.components[0][(0, 0)], 0.0);
        assert_eq!(mc.nuclear, [0.0; 3]);
        assert!(apply_cvs(&h, &m, &CvsSpec::new([])).is_err());
        let (hc2, mc2) = apply_cvs(&hc, &mc, &CvsSpec::new([0])).unwrap();
        assert_eq!(hc2, hc);
        assert_eq!(mc2, mc);
    }

    #[test]
    fn kappa_trivial_cases() {
        let h = parse_fcidump("&FCI NORB=1,NELEC=2 &END\n0.6 1 1 1 1\n-1.0 1 1 0 0\n").unwrap();
        assert!((kappa_from_standard(&h)[(0, 0)] - (-1.0 - 0.3)).abs() < 1e-15);
        let h0 = parse_fcidump("&FCI NORB=2,NELEC=2 &END\n-1.0 1 1 0 0\n0.2 2 1 0 0\n").unwrap();
        assert_eq!(kappa_from_standard(&h0), h0.one_body);
    }

    #[test]
    fn rescale_rules() {
        let h = parse_fcidump("&FCI NORB=1,NELEC=2 &END\n0.6 1 1 1 1\n-1.0 1 1 0 0\n0.5 0 0 0 0\n").unwrap();
        let id = rescale(&h, &RescaleWindow::new(0.0, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!(id, h);
        assert!(rescale(&h, &RescaleWindow::new(0.0, 1.0).unwrap(), -1.0).is_err());
        assert!(RescaleWindow::new(0.0, 0.0).is_err());
    }
}
