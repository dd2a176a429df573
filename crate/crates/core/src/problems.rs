//! Benchmark problems and the cross-section file format.
//!
//! Straight duct: a 36 cm × 28 cm domain with a 6 cm × 6 cm source in the
//! centre, absorber on either side of it along `y`, and two 6 cm void ducts
//! running the full height of the domain either side of the source along
//! `x`:
//!
//! ```text
//! x:  0 ──── 9 ──── 15 ──── 21 ──── 27 ──── 36
//!     absorber│ duct │absorber│ duct │ absorber
//!             │      │ source │      │            (source for 11 < y < 17)
//! ```
//!
//! Fuel assembly: a 17×17 lattice of pins, 8×8 cells per pin, cell pitch
//! 0.1575 cm. The inner 4×4 cells of each pin hold the pin material (fuel,
//! guide tube or control rod) and the outer ring is moderator.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::filters::Order;
use crate::grid::GridSpec;
use crate::transport::{MaterialData, MaterialField, Scheme};

pub const DUCT_WIDTH: f64 = 36.0;
pub const DUCT_HEIGHT: f64 = 28.0;
pub const DUCT_SPACINGS: [f64; 5] = [0.8, 0.4, 0.2, 0.1, 0.05];
/// Source half-width and duct inner/outer offsets from the centre line.
const DUCT_SOURCE_HALF: f64 = 3.0;
const DUCT_OUTER: f64 = 9.0;

pub const PIN_CELLS: usize = 8;
pub const PIN_INNER: std::ops::Range<usize> = 2..6;
pub const CELL_PITCH: f64 = 0.1575;

/// Guide-tube positions (row, column) of the standard 17×17 lattice,
/// including the central instrument tube.
pub const GUIDE_TUBES_17: [(usize, usize); 25] = [
    (2, 5),
    (2, 8),
    (2, 11),
    (3, 3),
    (3, 13),
    (5, 2),
    (5, 5),
    (5, 8),
    (5, 11),
    (5, 14),
    (8, 2),
    (8, 5),
    (8, 8),
    (8, 11),
    (8, 14),
    (11, 2),
    (11, 5),
    (11, 8),
    (11, 11),
    (11, 14),
    (13, 3),
    (13, 13),
    (14, 5),
    (14, 8),
    (14, 11),
];

/// Guide-tube positions of the reduced 4×4 lattice.
pub const GUIDE_TUBES_4: [(usize, usize); 4] = [(1, 1), (1, 2), (2, 1), (2, 2)];

pub const ASSEMBLY_MATERIALS: [&str; 4] = ["uox", "guide_tube", "control_rod", "moderator"];

/// The bundled synthetic two-group library.
pub const SYNTHETIC_2GROUP_CSV: &str = include_str!("../data/synthetic_2group.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Vacuum,
    Reflective,
}

/// Lattice size of the fuel assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lattice {
    Full17,
    Reduced4,
}

impl Lattice {
    pub fn pins(self) -> usize {
        match self {
            Lattice::Full17 => 17,
            Lattice::Reduced4 => 4,
        }
    }

    pub fn guide_tubes(self) -> &'static [(usize, usize)] {
        match self {
            Lattice::Full17 => &GUIDE_TUBES_17,
            Lattice::Reduced4 => &GUIDE_TUBES_4,
        }
    }
}

/// Solver parameters carried with a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub scheme: Scheme,
    pub order: Order,
    pub n_a: usize,
    /// Multigrid cycles per solve.
    pub mg_iters: usize,
    pub jacobi_sweeps: usize,
    pub outer_iters: usize,
    /// `None` selects the deepest legal hierarchy.
    pub levels: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            scheme: Scheme::PetrovGalerkin,
            order: Order::Quadratic,
            n_a: 4,
            mg_iters: 100,
            jacobi_sweeps: 3,
            outer_iters: 100,
            levels: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub width: f64,
    pub height: f64,
    pub grid: GridSpec,
    /// Material index per cell, `[j * nx + i]`.
    pub regions: Vec<usize>,
    pub material_names: Vec<String>,
    pub materials: Vec<MaterialData>,
    /// West, east, south, north.
    pub boundary: [Boundary; 4],
    pub settings: RunSettings,
}

impl ProblemSpec {
    pub fn n_groups(&self) -> usize {
        self.materials.first().map_or(0, |m| m.n_groups())
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundary.iter().any(|b| *b != Boundary::Vacuum) {
            return Err(Error::Unsupported(
                "reflective boundaries are not implemented".into(),
            ));
        }
        if self.regions.len() != self.grid.cells() {
            return Err(Error::InvalidProblem(
                "region map does not cover the grid".into(),
            ));
        }
        if self.material_names.len() != self.materials.len() {
            return Err(Error::InvalidProblem(
                "material names and data disagree".into(),
            ));
        }
        if let Some(r) = self.regions.iter().find(|&&r| r >= self.materials.len()) {
            return Err(Error::InvalidProblem(format!(
                "region map refers to missing material {r}"
            )));
        }
        Ok(())
    }

    pub fn material_field(&self) -> Result<MaterialField> {
        self.validate()?;
        MaterialField::from_regions(self.grid.nx, self.grid.ny, &self.regions, &self.materials)
    }

    pub fn region_name(&self, i: usize, j: usize) -> &str {
        &self.material_names[self.regions[j * self.grid.nx + i]]
    }
}

fn spacing_supported(dx: f64) -> bool {
    DUCT_SPACINGS.iter().any(|s| (s - dx).abs() < 1e-12)
}

/// Duct region of a point: 0 source, 1 absorber, 2 void duct.
pub fn duct_region(x: f64, y: f64) -> usize {
    let tol = 1e-9;
    let ax = (x - DUCT_WIDTH / 2.0).abs();
    let ay = (y - DUCT_HEIGHT / 2.0).abs();
    if ax <= DUCT_SOURCE_HALF + tol && ay <= DUCT_SOURCE_HALF + tol {
        0
    } else if ax > DUCT_SOURCE_HALF + tol && ax <= DUCT_OUTER + tol {
        2
    } else {
        1
    }
}

pub fn build_straight_duct(dx: f64) -> Result<ProblemSpec> {
    if !spacing_supported(dx) {
        return Err(invalid(format!(
            "duct spacing must be one of {DUCT_SPACINGS:?}, got {dx}"
        )));
    }
    let nx = (DUCT_WIDTH / dx).round() as usize;
    let ny = (DUCT_HEIGHT / dx).round() as usize;
    let grid = GridSpec::new(nx, ny, dx, dx, 1)?;
    let mut regions = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            regions.push(duct_region(grid.x(i), grid.y(j)));
        }
    }
    Ok(ProblemSpec {
        name: "straight_duct".into(),
        width: DUCT_WIDTH,
        height: DUCT_HEIGHT,
        grid,
        regions,
        material_names: vec!["source".into(), "absorber".into(), "duct".into()],
        materials: vec![
            MaterialData::absorber(0.5, 1.0),
            MaterialData::absorber(0.5, 0.0),
            MaterialData::absorber(0.0, 0.0),
        ],
        boundary: [Boundary::Vacuum; 4],
        settings: RunSettings::default(),
    })
}

/// Multi-group library keyed by material name.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionLibrary {
    pub n_groups: usize,
    pub materials: BTreeMap<String, MaterialData>,
}

impl CrossSectionLibrary {
    pub fn get(&self, name: &str) -> Result<&MaterialData> {
        self.materials.get(name).ok_or_else(|| {
            Error::Data(format!("material '{name}' missing from cross-section file"))
        })
    }
}

impl fmt::Display for CrossSectionLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "material,group,sigma_a,nu_sigma_f,sigma_f,chi")?;
        for g in 1..=self.n_groups {
            write!(f, ",s{g}")?;
        }
        writeln!(f)?;
        for (name, m) in &self.materials {
            for g in 0..self.n_groups {
                write!(
                    f,
                    "{name},{},{},{},{},{}",
                    g + 1,
                    m.sigma_a[g],
                    m.nu_sigma_f[g],
                    m.sigma_f[g],
                    m.chi[g]
                )?;
                for h in 0..self.n_groups {
                    write!(f, ",{}", m.scatter[g][h])?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Parses `material,group,sigma_a,nu_sigma_f,sigma_f,chi,s1,...,sG` rows,
/// where `s<h>` is the scatter cross section from this row's group into
/// group `h`. Groups are 1-based. Blank lines and `#` comments are skipped.
pub fn parse_cross_sections<R: BufRead>(input: R) -> Result<CrossSectionLibrary> {
    let mut header_seen = false;
    let mut rows: BTreeMap<String, BTreeMap<usize, (Vec<f64>, usize)>> = BTreeMap::new();
    let mut n_groups = None;
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = t.split(',').map(str::trim).collect();
        if !header_seen {
            header_seen = true;
            if cells.first() == Some(&"material") {
                if cells.len() < 7 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "header needs at least one scatter column".into(),
                    });
                }
                n_groups = Some(cells.len() - 6);
                continue;
            }
        }
        let ng = *n_groups.get_or_insert(cells.len().saturating_sub(6));
        if cells.len() != 6 + ng || ng == 0 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} columns, found {}", 6 + ng, cells.len()),
            });
        }
        let group: usize = cells[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad group '{}'", cells[1]),
        })?;
        if group == 0 || group > ng {
            return Err(Error::Parse {
                line: lineno,
                message: format!("group {group} outside 1..={ng}"),
            });
        }
        let values = cells[2..]
            .iter()
            .map(|c| {
                c.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad number '{c}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if rows
            .entry(cells[0].to_string())
            .or_default()
            .insert(group, (values, lineno))
            .is_some()
        {
            return Err(Error::Parse {
                line: lineno,
                message: format!("duplicate entry for {} group {group}", cells[0]),
            });
        }
    }
    let ng = n_groups.ok_or_else(|| Error::Data("cross-section file is empty".into()))?;
    let mut materials = BTreeMap::new();
    for (name, groups) in rows {
        if groups.len() != ng {
            return Err(Error::Data(format!(
                "material '{name}' has {} of {ng} groups",
                groups.len()
            )));
        }
        let mut m = MaterialData {
            sigma_a: vec![0.0; ng],
            nu_sigma_f: vec![0.0; ng],
            sigma_f: vec![0.0; ng],
            chi: vec![0.0; ng],
            scatter: vec![vec![0.0; ng]; ng],
            source: vec![0.0; ng],
        };
        for (g, (v, line)) in groups {
            let g = g - 1;
            m.sigma_a[g] = v[0];
            m.nu_sigma_f[g] = v[1];
            m.sigma_f[g] = v[2];
            m.chi[g] = v[3];
            m.scatter[g].copy_from_slice(&v[4..]);
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Parse {
                    line,
                    message: "cross sections must be finite and non-negative".into(),
                });
            }
        }
        m.validate()?;
        materials.insert(name, m);
    }
    Ok(CrossSectionLibrary {
        n_groups: ng,
        materials,
    })
}

pub fn load_cross_sections(path: &Path) -> Result<CrossSectionLibrary> {
    let f = std::fs::File::open(path)?;
    parse_cross_sections(std::io::BufReader::new(f))
}

pub fn synthetic_two_group() -> CrossSectionLibrary {
    parse_cross_sections(SYNTHETIC_2GROUP_CSV.as_bytes()).expect("bundled cross sections parse")
}

/// Region map of an assembly: `[j * nx + i]` into [`ASSEMBLY_MATERIALS`].
pub fn assembly_regions(lattice: Lattice, rods_inserted: bool) -> Vec<usize> {
    let pins = lattice.pins();
    let n = pins * PIN_CELLS;
    let rod = if rods_inserted { 2 } else { 1 };
    let mut regions = vec![3; n * n];
    for pr in 0..pins {
        for pc in 0..pins {
            let material = if lattice.guide_tubes().contains(&(pr, pc)) {
                rod
            } else {
                0
            };
            for a in PIN_INNER {
                for b in PIN_INNER {
                    // lattice row 0 is the top (north) row
                    let j = n - 1 - (pr * PIN_CELLS + a);
                    let i = pc * PIN_CELLS + b;
                    regions[j * n + i] = material;
                }
            }
        }
    }
    regions
}

pub fn build_fuel_assembly_with(
    lattice: Lattice,
    rods_inserted: bool,
    library: &CrossSectionLibrary,
) -> Result<ProblemSpec> {
    let mut missing = Vec::new();
    let mut materials = Vec::new();
    for name in ASSEMBLY_MATERIALS {
        match library.get(name) {
            Ok(m) => materials.push(m.clone()),
            Err(_) => missing.push(name),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "cross-section file lacks materials: {}",
            missing.join(", ")
        )));
    }
    let n = lattice.pins() * PIN_CELLS;
    let grid = GridSpec::new(n, n, CELL_PITCH, CELL_PITCH, 1)?;
    let side = n as f64 * CELL_PITCH;
    let settings = RunSettings {
        scheme: Scheme::Upwind,
        n_a: 2,
        ..RunSettings::default()
    };
    Ok(ProblemSpec {
        name: if rods_inserted {
            "assembly_rods_in".into()
        } else {
            "assembly_rods_out".into()
        },
        width: side,
        height: side,
        grid,
        regions: assembly_regions(lattice, rods_inserted),
        material_names: ASSEMBLY_MATERIALS.iter().map(|s| s.to_string()).collect(),
        materials,
        boundary: [Boundary::Vacuum; 4],
        settings,
    })
}

/// Full 17×17 assembly with cross sections from `xs_file`.
pub fn build_fuel_assembly(rods_inserted: bool, xs_file: &Path) -> Result<ProblemSpec> {
    build_fuel_assembly_with(
        Lattice::Full17,
        rods_inserted,
        &load_cross_sections(xs_file)?,
    )
}
