//! world-kit: layered 3D mesh worlds from equirectangular panoramas.

mod camera_io;
mod commands;
mod manifest;
mod world_dir;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "world-kit", version, about = "Layered 3D mesh world reconstruction from panoramas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full manifest-driven reconstruction pipeline
    Reconstruct {
        /// Scene manifest (JSON)
        manifest: PathBuf,
        /// Output directory (created atomically via staging + rename)
        #[arg(short, long)]
        out: PathBuf,
        /// Replace the output directory if it exists
        #[arg(long)]
        force: bool,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        tear_ratio: Option<f64>,
        #[arg(long)]
        feather: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        decimate_ratio: Option<f64>,
        #[arg(long)]
        pos_bits: Option<u8>,
        #[arg(long)]
        uv_bits: Option<u8>,
    },
    /// Render evaluation views from a panorama or a world directory
    RenderViews {
        /// Panorama PNG or a reconstructed world directory
        #[arg(long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// View preset: text-eval (6 views) or image-eval (7 views)
        #[arg(long)]
        preset: String,
        /// Optional camera JSON overriding the render position
        #[arg(long)]
        pose: Option<PathBuf>,
    },
    /// Unproject a pinhole image onto the panoramic sphere
    ProjectPinhole {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        /// Panorama width in pixels (height is width/2)
        #[arg(long, default_value_t = 2048)]
        width: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Align a layer depth map to the base depth map
    AlignDepth {
        #[arg(long)]
        layer_depth: PathBuf,
        #[arg(long)]
        base_depth: PathBuf,
        /// Inpainted-region mask excluded from the fit
        #[arg(long)]
        completed: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        feather: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Sheet-warp one layer into a mesh (.ply or .lwc by extension)
    Warp {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[arg(long, default_value_t = 1.3)]
        tear_ratio: f64,
        #[arg(long, default_value_t = 2.0)]
        feather: f64,
        #[arg(long, default_value_t = 14)]
        pos_bits: u8,
        #[arg(long, default_value_t = 12)]
        uv_bits: u8,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Decimate and re-encode a mesh (.ply or .lwc by extension)
    Optimize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        ratio: f64,
        /// Allow seam-pair vertices to move
        #[arg(long)]
        no_preserve_seam: bool,
        /// Allow open-boundary vertices to move
        #[arg(long)]
        no_preserve_boundary: bool,
        #[arg(long, default_value_t = 14)]
        pos_bits: u8,
        #[arg(long, default_value_t = 12)]
        uv_bits: u8,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// World-cache operations on PLY snapshots
    Cache {
        #[command(subcommand)]
        op: CacheOp,
    },
    /// PSNR / seam metrics between two rendered view sets
    Metrics {
        #[arg(long)]
        rendered: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Generate a synthetic test scene (sphere or room)
    Fixture {
        /// Scene kind: sphere or room
        kind: String,
        #[arg(long, default_value_t = 2048)]
        width: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CacheOp {
    /// Build a cache from one RGB-D frame
    Init {
        #[arg(long)]
        color: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Append an RGB-D frame to an existing cache
    Add {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        color: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        frame_id: u32,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Keep one point per voxel cell
    Cull {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        voxel: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Project the cache into a camera as a guidance frame
    Project {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = 1)]
        splat_radius: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Split a trajectory into overlapping clips
    Sample {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        clip_len: usize,
        #[arg(long)]
        overlap: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn configure_threads() {
    let mut threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if let Ok(value) = std::env::var("WORLD_KIT_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            if n >= 1 {
                threads = threads.min(n);
            }
        }
    }
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

fn main() -> Result<()> {
    configure_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::Reconstruct {
            manifest,
            out,
            force,
            stride,
            tear_ratio,
            feather,
            kappa,
            decimate_ratio,
            pos_bits,
            uv_bits,
        } => commands::reconstruct::run(&commands::reconstruct::ReconstructArgs {
            manifest,
            out,
            force,
            stride,
            tear_ratio,
            feather,
            kappa,
            decimate_ratio,
            pos_bits,
            uv_bits,
        }),
        Command::RenderViews {
            input,
            out,
            preset,
            pose,
        } => commands::render::run(&commands::render::RenderArgs {
            input,
            out,
            preset,
            pose,
        }),
        Command::ProjectPinhole {
            image,
            camera,
            width,
            out,
        } => commands::tools::project_pinhole(&commands::tools::ProjectPinholeArgs {
            image,
            camera,
            width,
            out,
        }),
        Command::AlignDepth {
            layer_depth,
            base_depth,
            completed,
            feather,
            out,
        } => commands::tools::align_depth(&commands::tools::AlignDepthArgs {
            layer_depth,
            base_depth,
            completed,
            feather,
            out,
        }),
        Command::Warp {
            image,
            depth,
            mask,
            stride,
            tear_ratio,
            feather,
            pos_bits,
            uv_bits,
            out,
        } => commands::tools::warp(&commands::tools::WarpArgs {
            image,
            depth,
            mask,
            stride,
            tear_ratio,
            feather,
            pos_bits,
            uv_bits,
            out,
        }),
        Command::Optimize {
            input,
            ratio,
            no_preserve_seam,
            no_preserve_boundary,
            pos_bits,
            uv_bits,
            out,
        } => commands::tools::optimize(&commands::tools::OptimizeArgs {
            input,
            ratio,
            keep_seam: !no_preserve_seam,
            keep_boundary: !no_preserve_boundary,
            pos_bits,
            uv_bits,
            out,
        }),
        Command::Cache { op } => match op {
            CacheOp::Init {
                color,
                depth,
                camera,
                out,
            } => commands::cache_cmd::cache_init(&commands::cache_cmd::CacheInitArgs {
                color,
                depth,
                camera,
                out,
            }),
            CacheOp::Add {
                cache,
                color,
                depth,
                camera,
                frame_id,
                out,
            } => commands::cache_cmd::cache_add(&commands::cache_cmd::CacheAddArgs {
                cache,
                color,
                depth,
                camera,
                frame_id,
                out,
            }),
            CacheOp::Cull { cache, voxel, out } => {
                commands::cache_cmd::cache_cull(&commands::cache_cmd::CacheCullArgs { cache, voxel, out })
            }
            CacheOp::Project {
                cache,
                camera,
                width,
                height,
                splat_radius,
                out,
            } => commands::cache_cmd::cache_project(&commands::cache_cmd::CacheProjectArgs {
                cache,
                camera,
                width,
                height,
                splat_radius,
                out,
            }),
            CacheOp::Sample {
                trajectory,
                clip_len,
                overlap,
                out,
            } => commands::cache_cmd::cache_sample(&commands::cache_cmd::CacheSampleArgs {
                trajectory,
                clip_len,
                overlap,
                out,
            }),
        },
        Command::Metrics {
            rendered,
            reference,
            out,
        } => commands::tools::metrics(&commands::tools::MetricsArgs {
            rendered,
            reference,
            out,
        }),
        Command::Fixture { kind, width, out } => {
            commands::fixture_cmd::run(&commands::fixture_cmd::FixtureArgs { kind, width, out })
        }
    }
}
