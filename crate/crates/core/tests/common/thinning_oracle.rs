//! Set-based re-implementation of two-subiteration thinning used as an
//! oracle for the production skeletonizer. Written independently: pixels
//! are coordinates in a `BTreeSet` and neighbours are looked up by name.

use std::collections::{BTreeSet, VecDeque};

pub type Px = (i32, i32);

pub fn to_set(h: usize, w: usize, data: &[bool]) -> BTreeSet<Px> {
    (0..h * w).filter(|&i| data[i]).map(|i| ((i / w) as i32, (i % w) as i32)).collect()
}

fn neighbours(s: &BTreeSet<Px>, (y, x): Px) -> [bool; 8] {
    let on = |dy: i32, dx: i32| s.contains(&(y + dy, x + dx));
    let p2 = on(-1, 0);
    let p3 = on(-1, 1);
    let p4 = on(0, 1);
    let p5 = on(1, 1);
    let p6 = on(1, 0);
    let p7 = on(1, -1);
    let p8 = on(0, -1);
    let p9 = on(-1, -1);
    [p2, p3, p4, p5, p6, p7, p8, p9]
}

fn removable(s: &BTreeSet<Px>, p: Px, pass: u8) -> bool {
    let [p2, p3, p4, p5, p6, p7, p8, p9] = neighbours(s, p);
    let seq = [p2, p3, p4, p5, p6, p7, p8, p9, p2];
    let b = seq[..8].iter().filter(|v| **v).count();
    let a = seq.windows(2).filter(|w| !w[0] && w[1]).count();
    let (c1, c2) = if pass == 1 { (p2 && p4 && p6, p4 && p6 && p8) } else { (p2 && p4 && p8, p2 && p6 && p8) };
    (2..=6).contains(&b) && a == 1 && !c1 && !c2
}

fn components(s: &BTreeSet<Px>) -> Vec<BTreeSet<Px>> {
    let mut left = s.clone();
    let mut out = Vec::new();
    while let Some(&start) = left.iter().next() {
        let mut comp = BTreeSet::new();
        let mut q = VecDeque::from([start]);
        left.remove(&start);
        while let Some((y, x)) = q.pop_front() {
            comp.insert((y, x));
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if left.remove(&(y + dy, x + dx)) {
                        q.push_back((y + dy, x + dx));
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

pub fn skeleton(mask: &BTreeSet<Px>) -> BTreeSet<Px> {
    let mut s = mask.clone();
    loop {
        let mut removed = 0;
        for pass in [1u8, 2] {
            let doomed: Vec<Px> = s.iter().copied().filter(|&p| removable(&s, p, pass)).collect();
            removed += doomed.len();
            for p in doomed {
                s.remove(&p);
            }
        }
        if removed == 0 {
            break;
        }
    }
    for comp in components(mask) {
        if comp.is_disjoint(&s) {
            // BTreeSet order on (row, col) is row-major
            s.insert(*comp.iter().next().unwrap());
        }
    }
    s
}

pub fn cl_dice(pred: &BTreeSet<Px>, gt: &BTreeSet<Px>) -> f64 {
    let (sp, sg) = (skeleton(pred), skeleton(gt));
    match (sp.is_empty(), sg.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let tprec = sp.intersection(gt).count() as f64 / sp.len() as f64;
    let tsens = sg.intersection(pred).count() as f64 / sg.len() as f64;
    if tprec + tsens == 0.0 {
        0.0
    } else {
        2.0 * tprec * tsens / (tprec + tsens)
    }
}
