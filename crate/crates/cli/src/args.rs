use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_BROKER: &str = "127.0.0.1:1883";

#[derive(Debug, Parser)]
#[command(
    name = "ewaste",
    version,
    about = "E-waste segregation pipeline: MQTT broker, weighing stations, inventory service and dataset tooling",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Log level for stderr (error, warn, info, debug, trace)
    #[arg(long, global = true, env = "EWASTE_LOG", default_value = "warn")]
    pub log_level: tracing_subscriber::filter::LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the MQTT broker
    #[command(subcommand)]
    Broker(BrokerCommand),
    /// Run a simulated weighing station
    #[command(subcommand)]
    Device(DeviceCommand),
    /// Run the inventory service (telemetry feed + HTTP API)
    #[command(subcommand)]
    Service(ServiceCommand),
    /// Annotation dataset tools
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Detection evaluation
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Built-in e-waste generation statistics
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Minimal MQTT publish/subscribe client
    #[command(subcommand)]
    Client(ClientCommand),
    /// Broker, two stations and the inventory service in one process
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// `host:port` with a numeric port.
fn parse_addr(s: &str) -> Result<String, String> {
    match s.rsplit_once(':') {
        Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => Ok(s.to_string()),
        _ => Err(format!("expected HOST:PORT, got {s:?}")),
    }
}

fn parse_qos(s: &str) -> Result<u8, String> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err("QoS must be 0 or 1".into()),
    }
}

#[derive(Debug, Args)]
pub struct BrokerAddr {
    /// Broker address
    #[arg(long, env = "EWASTE_BROKER", default_value = DEFAULT_BROKER, value_parser = parse_addr)]
    pub broker: String,
}

#[derive(Debug, Subcommand)]
pub enum BrokerCommand {
    /// Accept MQTT connections until interrupted
    Serve {
        #[arg(long, default_value = DEFAULT_BROKER, value_parser = parse_addr)]
        bind: String,
        /// QoS-1 redelivery interval in milliseconds
        #[arg(long, default_value_t = 5000)]
        retry_ms: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum DeviceCommand {
    /// Replay a scenario file through the mock detector and publish telemetry
    Run {
        #[arg(long)]
        id: String,
        /// JSON list of events {image_id, raw, ts, detections: [{component, score, bbox?}]}
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        broker: BrokerAddr,
        /// Raw reading at zero load
        #[arg(long, allow_negative_numbers = true)]
        tare: f64,
        /// Grams per raw count
        #[arg(long)]
        scale: f64,
        #[arg(long, default_value = "1", value_parser = parse_qos)]
        qos: u8,
    },
}

#[derive(Debug, Subcommand)]
pub enum ServiceCommand {
    /// Subscribe to station telemetry and serve the ordering API until interrupted
    Run {
        #[command(flatten)]
        broker: BrokerAddr,
        #[arg(long, default_value = "127.0.0.1:8080", value_parser = parse_addr)]
        http: String,
        /// Append-only event log
        #[arg(long, env = "EWASTE_STORE", default_value = "ewaste-events.ndjson")]
        store: PathBuf,
        /// Price table: JSON map of category to price per kg, plus optional currency_code
        #[arg(long, env = "EWASTE_PRICES")]
        prices: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Stratified train/test split; writes both halves as COCO JSON
    Split {
        /// COCO input
        #[arg(long, conflicts_with = "via", required_unless_present = "via")]
        coco: Option<PathBuf>,
        /// VIA project export input
        #[arg(long)]
        via: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail when a category has no image of its own
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Per-class AP and mAP of NDJSON predictions against COCO ground truth
    Map {
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Growth table, CAGR, category shares and the total cross-check
    Report {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Debug, Subcommand)]
pub enum ClientCommand {
    /// Print messages as `topic<TAB>payload` lines
    Sub {
        #[command(flatten)]
        broker: BrokerAddr,
        #[arg(long, required = true)]
        topic: Vec<String>,
        #[arg(long, default_value = "1", value_parser = parse_qos)]
        qos: u8,
        /// Exit after this many messages
        #[arg(long)]
        count: Option<usize>,
    },
    /// Publish one message
    Pub {
        #[command(flatten)]
        broker: BrokerAddr,
        #[arg(long)]
        topic: String,
        #[arg(long)]
        payload: String,
        #[arg(long, default_value = "1", value_parser = parse_qos)]
        qos: u8,
    },
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Scenario file; the bundled two-station scenario when omitted
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Seed for the load-cell noise
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
