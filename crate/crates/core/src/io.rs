//! Instance files, preprocessing, random instances and SVG rendering.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctsp::{CtspError, Instance, Tour};
use crate::geometry::{
    random_star_polygon, shrink_polygon, subsample_polygon, GeometryError, Point2, Polygon,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed instance: {0}")]
    Json(#[from] serde_json::Error),
    #[error("instance has no polygons")]
    Empty,
    #[error("polygon ids must be 1..={expected} in order, found {found} at position {position}")]
    BadId {
        position: usize,
        expected: usize,
        found: usize,
    },
    #[error("polygon {id}: {source}")]
    Polygon {
        id: usize,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Instance(#[from] CtspError),
    #[error("invalid generator parameters: {0}")]
    Generator(String),
    #[error("invalid render spec: {0}")]
    Render(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonRecord {
    pub id: usize,
    pub vertices: Vec<[f64; 2]>,
}

/// On-disk instance: polygons carry 1-based contiguous ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub name: String,
    pub polygons: Vec<PolygonRecord>,
}

impl InstanceFile {
    pub fn from_instance(instance: &Instance) -> Self {
        Self {
            name: instance.name.clone(),
            polygons: instance
                .polygons()
                .iter()
                .enumerate()
                .map(|(k, poly)| PolygonRecord {
                    id: k + 1,
                    vertices: poly.vertices().iter().map(|v| [v.x, v.y]).collect(),
                })
                .collect(),
        }
    }

    pub fn into_instance(self) -> Result<Instance, IoError> {
        if self.polygons.is_empty() {
            return Err(IoError::Empty);
        }
        let mut polys = Vec::with_capacity(self.polygons.len());
        for (k, rec) in self.polygons.into_iter().enumerate() {
            if rec.id != k + 1 {
                return Err(IoError::BadId {
                    position: k,
                    expected: k + 1,
                    found: rec.id,
                });
            }
            let vertices = rec
                .vertices
                .iter()
                .map(|v| Point2::new(v[0], v[1]))
                .collect();
            polys.push(
                Polygon::new(vertices).map_err(|source| IoError::Polygon { id: rec.id, source })?,
            );
        }
        Ok(Instance::new(self.name, polys)?)
    }
}

pub fn parse_instance(json: &str) -> Result<Instance, IoError> {
    serde_json::from_str::<InstanceFile>(json)?.into_instance()
}

/// JSON text whose coordinates parse back to the same bits.
pub fn instance_to_json(instance: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_instance(instance))
        .expect("instance serializes")
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    std::fs::write(path, contents).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_instance(path: &Path) -> Result<Instance, IoError> {
    parse_instance(&read(path)?)
}

pub fn save_instance(instance: &Instance, path: &Path) -> Result<(), IoError> {
    write_file(path, &instance_to_json(instance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PreprocessReport {
    pub id: usize,
    pub before: usize,
    pub after: usize,
}

pub const DEFAULT_TARGET_VERTICES: usize = 50;
pub const DEFAULT_SHRINK: f64 = 0.8;

/// Subsamples and then shrinks every polygon.
pub fn preprocess(
    instance: &Instance,
    target_vertices: usize,
    shrink: f64,
) -> Result<(Instance, Vec<PreprocessReport>), IoError> {
    let mut polys = Vec::with_capacity(instance.len());
    let mut report = Vec::with_capacity(instance.len());
    for (k, poly) in instance.polygons().iter().enumerate() {
        let id = k + 1;
        let reduced = subsample_polygon(poly, target_vertices)
            .and_then(|p| shrink_polygon(&p, shrink))
            .map_err(|source| IoError::Polygon { id, source })?;
        report.push(PreprocessReport {
            id,
            before: poly.len(),
            after: reduced.len(),
        });
        polys.push(reduced);
    }
    Ok((Instance::new(instance.name.clone(), polys)?, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParams {
    /// Side of the grid cell each polygon is placed in.
    pub spread: f64,
    /// Range of the outer radius of each polygon.
    pub size_range: (f64, f64),
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            spread: 10.0,
            size_range: (1.5, 4.0),
        }
    }
}

/// `p` perturbed regular `k`-gons, `k` in `[5, 12]`, one per cell of a
/// square grid with jittered centers, so bounding boxes never overlap.
pub fn generate_instance(
    p: usize,
    seed: u64,
    params: GeneratorParams,
) -> Result<Instance, IoError> {
    let (lo, hi) = params.size_range;
    if p < 2 {
        return Err(IoError::Generator(format!(
            "need at least 2 polygons, got {p}"
        )));
    }
    if !(lo > 0.0 && lo <= hi && 2.0 * hi < params.spread) {
        return Err(IoError::Generator(format!(
            "size range ({lo}, {hi}) must satisfy 0 < lo <= hi < spread/2 = {}",
            params.spread / 2.0
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (p as f64).sqrt().ceil() as usize;
    let mut polys = Vec::with_capacity(p);
    for k in 0..p {
        let radius = if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        };
        let slack = params.spread / 2.0 - radius;
        let center = Point2::new(
            ((k % cols) as f64 + 0.5) * params.spread + rng.random_range(-slack..=slack),
            ((k / cols) as f64 + 0.5) * params.spread + rng.random_range(-slack..=slack),
        );
        let sides = rng.random_range(5..=12);
        polys.push(
            random_star_polygon(&mut rng, sides, center, radius)
                .map_err(|source| IoError::Polygon { id: k + 1, source })?,
        );
    }
    Ok(Instance::new(format!("generated-p{p}-s{seed}"), polys)?)
}

/// Star-shaped polygon with `n_vertices` vertices, like a detailed
/// administrative boundary.
pub fn dense_polygon(n_vertices: usize, seed: u64) -> Result<Polygon, IoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_star_polygon(&mut rng, n_vertices, Point2::new(0.0, 0.0), 1000.0)
        .map_err(|source| IoError::Polygon { id: 1, source })
}

/// `n` unit squares on the x axis with gaps of 2.
pub fn line_instance(n: usize) -> Result<Instance, IoError> {
    let polys = (0..n)
        .map(|i| {
            let x = 3.0 * i as f64;
            Polygon::rectangle(x, 0.0, x + 1.0, 1.0)
                .map_err(|source| IoError::Polygon { id: i + 1, source })
        })
        .collect::<Result<_, _>>()?;
    Ok(Instance::new(format!("line-{n}"), polys)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub width: u32,
    pub height: u32,
    pub polygon_stroke: String,
    pub polygon_fill: String,
    pub route_stroke: String,
    pub trail_stroke: String,
    pub show_points: bool,
    pub show_labels: bool,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            width: 1000,
            height: 1000,
            polygon_stroke: "#555555".into(),
            polygon_fill: "#f4d6c6".into(),
            route_stroke: "#1f3a93".into(),
            trail_stroke: "#1f3a93".into(),
            show_points: false,
            show_labels: false,
        }
    }
}

struct Viewport {
    min: Point2,
    scale: f64,
    height: f64,
}

impl Viewport {
    fn new(instance: &Instance, spec: &RenderSpec) -> Self {
        let (mut min, mut max) = (
            Point2::new(f64::INFINITY, f64::INFINITY),
            Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for poly in instance.polygons() {
            let (a, b) = poly.bounding_box();
            min = Point2::new(min.x.min(a.x), min.y.min(a.y));
            max = Point2::new(max.x.max(b.x), max.y.max(b.y));
        }
        let margin = 0.05 * (max.x - min.x).max(max.y - min.y).max(f64::MIN_POSITIVE);
        min = Point2::new(min.x - margin, min.y - margin);
        let span = Point2::new(max.x + margin - min.x, max.y + margin - min.y);
        let scale = (spec.width as f64 / span.x).min(spec.height as f64 / span.y);
        Self {
            min,
            scale,
            height: spec.height as f64,
        }
    }

    fn map(&self, p: Point2) -> (f64, f64) {
        (
            (p.x - self.min.x) * self.scale,
            self.height - (p.y - self.min.y) * self.scale,
        )
    }

    fn points(&self, pts: impl IntoIterator<Item = Point2>) -> String {
        pts.into_iter()
            .map(|p| {
                let (x, y) = self.map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn closed(perm: &[usize], points: &[Point2]) -> Vec<Point2> {
    perm.iter()
        .chain(perm.first())
        .map(|&c| points[c])
        .collect()
}

/// SVG with one `<polygon>` per polygon, an optional closed route
/// `<polyline class="route">` with `p + 1` points, and one
/// `<polyline class="trail">` per trail entry, darker for later entries.
/// Trail entries are point sets indexed by city, drawn in `tour`'s order.
pub fn render_svg(
    instance: &Instance,
    tour: Option<&Tour>,
    trail: &[Vec<Point2>],
    spec: &RenderSpec,
) -> Result<String, IoError> {
    if spec.width == 0 || spec.height == 0 {
        return Err(IoError::Render("width and height must be positive".into()));
    }
    if !trail.is_empty() && tour.is_none() {
        return Err(IoError::Render(
            "a trail needs a tour for its visiting order".into(),
        ));
    }
    let view = Viewport::new(instance, spec);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = spec.width,
        h = spec.height
    );
    let _ = writeln!(
        out,
        r#"<g class="polygons" stroke="{}" fill="{}" stroke-width="1">"#,
        xml_escape(&spec.polygon_stroke),
        xml_escape(&spec.polygon_fill)
    );
    for (k, poly) in instance.polygons().iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<polygon data-id="{}" points="{}"/>"#,
            k + 1,
            view.points(poly.vertices().iter().copied())
        );
    }
    out.push_str("</g>\n");
    if let Some(tour) = tour {
        let n = trail.len();
        for (j, pts) in trail.iter().enumerate() {
            let opacity = 0.15 + 0.6 * (j + 1) as f64 / n as f64;
            let _ = writeln!(
                out,
                r#"<polyline class="trail" fill="none" stroke="{}" stroke-opacity="{opacity:.3}" stroke-width="1" points="{}"/>"#,
                xml_escape(&spec.trail_stroke),
                view.points(closed(&tour.perm, pts))
            );
        }
        let _ = writeln!(
            out,
            r#"<polyline class="route" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            xml_escape(&spec.route_stroke),
            view.points(closed(&tour.perm, &tour.points))
        );
        if spec.show_points {
            for &c in &tour.perm {
                let (x, y) = view.map(tour.points[c]);
                let _ = writeln!(
                    out,
                    r#"<circle cx="{x:.3}" cy="{y:.3}" r="3" fill="{}"/>"#,
                    xml_escape(&spec.route_stroke)
                );
            }
        }
    }
    if spec.show_labels {
        for (k, poly) in instance.polygons().iter().enumerate() {
            let (x, y) = view.map(poly.centroid());
            let _ = writeln!(
                out,
                r#"<text x="{x:.3}" y="{y:.3}" font-size="10">{}</text>"#,
                k + 1
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
