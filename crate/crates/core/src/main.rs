use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use garment_core::api::{self, ClusterMapping, ColorMapping, RecolorRequest, RecolorResponse};
use garment_core::config::{Config, Defaults};
use garment_core::document::{decode_b64, encode_b64, DesignDocument};
use garment_core::losses::kl_color_loss;
use garment_core::palette::{hierarchical_clusters, kmeans_clusters, stats_for_labels};
use garment_core::pipeline::build_corpus;
use garment_core::raster::{GrayImage, RasterImage};
use garment_core::shading::{decompose, render_shading};
use garment_core::synthesizer::{full_pipeline, FillMode};
use garment_core::{Error, Result};

#[derive(Parser)]
#[command(name = "garment", version, about = "Garment design toolkit built on bi-colored texture edges")]
struct Cli {
    /// TOML file with a [defaults] table
    #[arg(long, global = true, env = "BICOLOR_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for randomized stages
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract contour, bi-colored edges and shading edges from a photo
    Extract {
        image: PathBuf,
        /// Output design document
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the layers as PNG files into this directory
        #[arg(long)]
        layers: Option<PathBuf>,
    },
    /// Synthesize a shaded garment from a design document
    Synth {
        #[arg(long)]
        doc: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        /// Also write the unshaded synthesis
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Render a shading map from a document, or decompose a photo
    Shade(ShadeArgs),
    /// Expand a texture patch to a larger canvas
    Expand {
        #[arg(long)]
        patch: PathBuf,
        /// Output size as WxH
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the bi-colored edges of the result
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Change colors in a document or image clusters
    Recolor(RecolorArgs),
    #[command(subcommand)]
    Metrics(MetricsCmd),
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Run the HTTP service
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Harmonic,
    Voronoi,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "input")]
struct ShadeInput {
    /// Render the document's shading layer
    #[arg(long)]
    doc: Option<PathBuf>,
    /// Decompose a photo into reflectance and shading
    #[arg(long)]
    photo: Option<PathBuf>,
}

#[derive(Args)]
struct ShadeArgs {
    #[command(flatten)]
    input: ShadeInput,
    /// Shading PNG (document) or output directory (photo)
    #[arg(short, long)]
    out: PathBuf,
    /// Garment mask for photo decomposition (default: extracted contour)
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct RecolorArgs {
    /// Design document to recolor
    #[arg(long, conflicts_with_all = ["image", "k", "mask"])]
    doc: Option<PathBuf>,
    /// Image whose k-means clusters are recolored
    #[arg(long, required_unless_present = "doc")]
    image: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// FROM=TO; colors as r,g,b or #rrggbb, FROM is a cluster index for images
    #[arg(long = "map", required = true)]
    map: Vec<String>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Color KL divergence between a reference and a candidate
    Kl {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        cand: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// k-means cluster count (default: agglomerative clustering)
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Build training samples from a directory of photos
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Emit the color-point and patch layers
        #[arg(long)]
        ablation: bool,
        /// Canonical square size
        #[arg(long)]
        size: Option<usize>,
    },
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: usize = w.parse().map_err(|_| "bad width")?;
    let h: usize = h.parse().map_err(|_| "bad height")?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

fn parse_color(s: &str) -> Result<[u8; 3]> {
    let bad = || Error::InvalidArgument(format!("bad color {s:?}"));
    if let Some(hex) = s.strip_prefix('#') {
        if hex.len() != 6 {
            return Err(bad());
        }
        let v = u32::from_str_radix(hex, 16).map_err(|_| bad())?;
        return Ok([(v >> 16) as u8, (v >> 8) as u8, v as u8]);
    }
    let parts: Vec<u8> = s.split(',').map(|p| p.trim().parse::<u8>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    <[u8; 3]>::try_from(parts).map_err(|_| bad())
}

fn read_doc(path: &Path) -> Result<DesignDocument> {
    let raw = std::fs::read(path)?;
    let doc: DesignDocument = api::parse(&raw).map_err(|e| Error::InvalidArgument(e.message))?;
    doc.validate()?;
    Ok(doc)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn api_err(e: api::ApiError) -> Error {
    match e.status {
        404 | 415 | 422 => Error::InvalidArgument(format!("{} ({})", e.message, e.code)),
        _ => Error::InvalidArgument(e.message),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg: Defaults = match &cli.config {
        Some(p) => Config::load(p)?.defaults,
        None => Defaults::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.cmd {
        Cmd::Extract { image, out, layers } => {
            let img = RasterImage::load(&image)?;
            let res = api::extract(&img, &cfg).map_err(api_err)?;
            write_json(&out, &res.document)?;
            if let Some(dir) = layers {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("contour.png"), decode_b64(&res.document.contour_layer)?)?;
                std::fs::write(dir.join("bicolor.png"), decode_b64(&res.bicolor)?)?;
                std::fs::write(dir.join("coverage.png"), decode_b64(&res.coverage)?)?;
                if let Some(s) = &res.document.shading_layer {
                    std::fs::write(dir.join("shading_edges.png"), decode_b64(s)?)?;
                }
            }
            if res.no_mask {
                log::warn!("contour is open; no shading layer");
            }
        }
        Cmd::Synth { doc, out, mode, base } => {
            let doc = read_doc(&doc)?;
            if let Some(m) = mode {
                cfg.synth.mode = match m {
                    Mode::Harmonic => FillMode::Harmonic,
                    Mode::Voronoi => FillMode::Voronoi,
                };
            }
            let res = full_pipeline(&doc, &cfg.synth, &cfg.shade, &cfg.patchmatch)?;
            for w in &res.warnings {
                log::warn!("{w}");
            }
            res.image.save_png(&out)?;
            if let Some(b) = base {
                res.base.save_png(b)?;
            }
        }
        Cmd::Shade(args) => {
            if let Some(doc) = args.input.doc {
                let doc = read_doc(&doc)?;
                render_shading(&doc.contour()?, &doc.shading_edges()?, &cfg.shade)?.save_png(&args.out)?;
            } else if let Some(photo) = args.input.photo {
                let img = RasterImage::load(&photo)?;
                let mask = match args.mask {
                    Some(m) => GrayImage::mask_from_png_bytes(&std::fs::read(m)?)?,
                    None => {
                        let sample = garment_core::pipeline::build_sample(&img, "photo", "", &cfg.pipeline)?;
                        if sample.no_mask {
                            return Err(Error::InvalidArgument("contour is open; pass --mask".into()));
                        }
                        img_mask(&sample.contour)?
                    }
                };
                let img = if img.dims() == mask.dims() {
                    img
                } else {
                    garment_core::raster::resample(&img, mask.width(), mask.height())?
                };
                let stats = hierarchical_clusters(&img, &mask, cfg.pipeline.cluster_thresh)?;
                let pair = decompose(&img, &mask, &stats)?;
                std::fs::create_dir_all(&args.out)?;
                pair.reflectance.save_png(args.out.join("reflectance.png"))?;
                std::fs::write(args.out.join("shading.u16.png"), pair.shading.to_shading_png_bytes()?)?;
            }
        }
        Cmd::Expand { patch, size, out, edges } => {
            let img = RasterImage::load(&patch)?;
            let res = api::expand(&img, size.0, size.1, cfg.seed, &cfg).map_err(api_err)?;
            std::fs::write(&out, decode_b64(&res.image)?)?;
            if let Some(e) = edges {
                std::fs::write(e, res.texture_layer.to_json()?)?;
            }
        }
        Cmd::Recolor(args) => {
            let pairs: Vec<(&str, &str)> = args
                .map
                .iter()
                .map(|m| m.split_once('=').ok_or_else(|| Error::InvalidArgument(format!("--map {m:?}: expected FROM=TO"))))
                .collect::<Result<_>>()?;
            let req = if let Some(doc) = &args.doc {
                RecolorRequest::Document {
                    document: read_doc(doc)?,
                    mapping: pairs
                        .iter()
                        .map(|(f, t)| Ok(ColorMapping { from: parse_color(f)?, to: parse_color(t)? }))
                        .collect::<Result<_>>()?,
                }
            } else {
                let image = args.image.as_ref().expect("required by clap");
                RecolorRequest::Image {
                    image: encode_b64(&std::fs::read(image)?),
                    mask: args.mask.as_ref().map(std::fs::read).transpose()?.map(|b| encode_b64(&b)),
                    k: args.k.ok_or_else(|| Error::InvalidArgument("--k is required with --image".into()))?,
                    seed: cfg.seed,
                    mapping: pairs
                        .iter()
                        .map(|(f, t)| {
                            let cluster = f.parse().map_err(|_| Error::InvalidArgument(format!("bad cluster index {f:?}")))?;
                            Ok(ClusterMapping { cluster, color: parse_color(t)? })
                        })
                        .collect::<Result<_>>()?,
                }
            };
            match api::recolor(req, &cfg).map_err(api_err)? {
                RecolorResponse::Document { document, replaced } => {
                    write_json(&args.out, &document)?;
                    log::info!("replaced {replaced} samples");
                }
                RecolorResponse::Image { image, clusters } => {
                    std::fs::write(&args.out, decode_b64(&image)?)?;
                    println!("{}", serde_json::to_string(&clusters)?);
                }
            }
        }
        Cmd::Metrics(MetricsCmd::Kl { reference, cand, mask, k }) => {
            let y = RasterImage::load(&reference)?;
            let y_hat = RasterImage::load(&cand)?;
            let m = GrayImage::mask_from_png_bytes(&std::fs::read(mask)?)?;
            let stats = match k {
                Some(k) => kmeans_clusters(&y, &m, k, cfg.seed, &cfg.palette)?,
                None => hierarchical_clusters(&y, &m, cfg.pipeline.cluster_thresh)?,
            };
            let cand_stats = stats_for_labels(&y_hat, &stats)?;
            let kl = kl_color_loss(&stats, &cand_stats)?;
            println!("{}", serde_json::json!({ "kl": kl, "k": stats.k() }));
        }
        Cmd::Dataset(DatasetCmd::Build {
            input,
            output,
            ablation,
            size,
        }) => {
            let mut p = cfg.pipeline;
            p.ablation |= ablation;
            if let Some(s) = size {
                p.canonical_size = s;
            }
            let report = build_corpus(&input, &output, &p)?;
            let c = &report.manifest.counts;
            println!(
                "{} samples ({} train, {} val, {} with shading), {} failed; {} built, {} reused",
                c.samples, c.train, c.val, c.with_shading, c.failed, report.built, report.reused
            );
        }
        Cmd::Serve { port, host } => {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(garment_core::http::serve(SocketAddr::new(host, port), cfg))?;
        }
    }
    Ok(())
}

fn img_mask(cm: &garment_core::contour::ContourMap) -> Result<GrayImage> {
    garment_core::contour::outer_boundary(cm)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("BICOLOR_LOG_LEVEL", "warn")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
