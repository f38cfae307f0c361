//! Command-line client for the gateway, plus `serve` and fixture generation.
//!
//! Exit codes: 0 on success, 1 for API or connection errors, 2 for usage errors.
//! Settings resolve as flags, then `FLOWFORGE_*` variables, then the TOML file
//! at `FLOWFORGE_CONFIG` or `~/.flowforge.toml`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowforge_core::viz::{AggFn, Aggregate, Filter, FilterOp, QuerySpec};
use flowforge_core::Value;
use serde::Deserialize;
use serde_json::{json, Value as Json};

use crate::gateway::{self, ApiError, ServeConfig};

pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:8080";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "flowforge", version, about = "Service catalogue, workflows, tuning and visualization")]
pub struct Cli {
    /// Gateway base URL
    #[arg(long, global = true, env = "FLOWFORGE_ENDPOINT")]
    endpoint: Option<String>,
    /// Bearer token sent with every request
    #[arg(long, global = true, env = "FLOWFORGE_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[arg(long, global = true, value_enum, env = "FLOWFORGE_OUTPUT")]
    output: Option<OutputFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the gateway
    Serve(ServeArgs),
    #[command(subcommand)]
    Service(ServiceCmd),
    #[command(subcommand)]
    Stream(StreamCmd),
    #[command(subcommand)]
    Task(TaskCmd),
    #[command(subcommand)]
    Run(RunCmd),
    #[command(subcommand)]
    Optimize(OptimizeCmd),
    #[command(subcommand)]
    Viz(VizCmd),
    #[command(subcommand)]
    Fixture(FixtureCmd),
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    host: Option<std::net::IpAddr>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Require this bearer token on API requests
    #[arg(long)]
    auth_token: Option<String>,
    /// Static assets served under /ui
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ServiceCmd {
    /// Register a service descriptor from a JSON file
    Register {
        #[arg(short, long)]
        file: PathBuf,
    },
    List {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        text: Option<String>,
    },
    /// Show a service; the highest version when none is given
    Get { name: String, version: Option<String> },
    Rm { name: String, version: String },
}

#[derive(Debug, Subcommand)]
enum StreamCmd {
    Create { name: String, dsl: String },
    Deploy {
        name: String,
        /// JSON file holding a configuration point
        #[arg(long)]
        config: Option<PathBuf>,
    },
    Undeploy {
        name: String,
        /// Also remove the definition
        #[arg(long)]
        destroy: bool,
    },
    List,
}

#[derive(Debug, Subcommand)]
enum TaskCmd {
    Create { name: String, dsl: String },
    Launch {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Poll until the run finishes and print the final record
        #[arg(long)]
        wait: bool,
        #[arg(long, default_value_t = 600)]
        timeout_secs: u64,
    },
    List,
}

#[derive(Debug, Subcommand)]
enum RunCmd {
    List {
        #[arg(long)]
        workflow: Option<String>,
        #[arg(long)]
        state: Option<String>,
    },
    Get { id: String },
    Metrics { id: String },
}

#[derive(Debug, Subcommand)]
enum OptimizeCmd {
    /// Submit a tuning job; flags override fields of the request file
    Run {
        #[arg(short, long)]
        file: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        training_n: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        /// simulated or derivative
        #[arg(long)]
        executor: Option<String>,
        #[arg(long)]
        wait: bool,
        #[arg(long, default_value_t = 600)]
        timeout_secs: u64,
    },
    Status { id: String },
}

#[derive(Debug, Subcommand)]
enum VizCmd {
    /// List sources, or register one with --kind
    Sources {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, requires = "kind")]
        location: Option<String>,
        #[arg(long, requires = "kind")]
        id: Option<String>,
    },
    Tables { source: String },
    Query(QueryArgs),
    /// Recommend charts for a query result
    Recommend(QueryArgs),
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// JSON query spec; other flags are ignored when given
    #[arg(short, long)]
    file: Option<PathBuf>,
    #[arg(long, default_value = "internal")]
    source: String,
    #[arg(long, required_unless_present = "file")]
    table: Option<String>,
    #[arg(long, value_delimiter = ',')]
    select: Vec<String>,
    /// `column op value`, e.g. `cluster = 1`
    #[arg(long = "where")]
    filters: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    group_by: Vec<String>,
    /// `fn:column`, e.g. `count:*` or `avg:stops`
    #[arg(long = "agg")]
    aggregates: Vec<String>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum FixtureCmd {
    /// Write a synthetic routes CSV
    Routes {
        #[arg(long, default_value_t = 5000)]
        rows: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}", .0.message)]
    Api(ApiError),
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Api(_) | CliError::Transport(_) => 1,
        }
    }
}

/// Keys read from the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint: Option<String>,
    pub token: Option<String>,
    pub output: Option<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub endpoint: String,
    pub token: Option<String>,
    pub output: OutputFormat,
}

fn config_path() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("FLOWFORGE_CONFIG") {
        return Some(p.into());
    }
    std::env::var_os("HOME").map(|h| Path::new(&h).join(".flowforge.toml"))
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(FileConfig::default()),
        Err(e) => return Err(CliError::Usage(format!("{}: {e}", path.display()))),
    };
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// `scheme://host[:port][/path]` with an http or https scheme.
pub fn is_endpoint_url(url: &str) -> bool {
    let Some(rest) = url.strip_prefix("http://").or_else(|| url.strip_prefix("https://")) else {
        return false;
    };
    let authority = rest.split('/').next().unwrap_or("");
    let host = match authority.rsplit_once(':') {
        Some((h, port)) if !h.ends_with(']') || authority.starts_with('[') => {
            if port.is_empty() || port.parse::<u16>().is_err() {
                return false;
            }
            h
        }
        _ => authority,
    };
    !host.is_empty() && !host.contains(['@', ' ', '?', '#'])
}

impl Settings {
    /// Flag and environment values arrive merged from the parser; the file fills the gaps.
    pub fn resolve(
        endpoint: Option<String>,
        token: Option<String>,
        output: Option<OutputFormat>,
        file: FileConfig,
    ) -> Result<Self, CliError> {
        let token = token.or_else(|| std::env::var("FLOWFORGE_AUTH_TOKEN").ok()).or(file.token).filter(|t| !t.is_empty());
        let endpoint = endpoint.or(file.endpoint).unwrap_or_else(|| DEFAULT_ENDPOINT.into());
        if !is_endpoint_url(&endpoint) {
            return Err(CliError::Usage(format!("invalid endpoint URL `{endpoint}`")));
        }
        let endpoint = endpoint.trim_end_matches('/').to_string();
        Ok(Settings { endpoint, token, output: output.or(file.output).unwrap_or(OutputFormat::Table) })
    }
}

enum Method {
    Get,
    Post,
    Delete,
}

struct Client {
    agent: ureq::Agent,
    settings: Settings,
}

impl Client {
    fn new(settings: Settings) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Client { agent, settings }
    }

    /// Returns the response body of a 2xx reply; anything else becomes an error.
    fn call(&self, method: Method, path: &str, query: &[(&str, &str)], body: Option<Vec<u8>>) -> Result<String, CliError> {
        let url = format!("{}/api{path}", self.settings.endpoint);
        let auth = self.settings.token.as_ref().map(|t| format!("Bearer {t}"));
        let result = match method {
            Method::Get | Method::Delete => {
                let mut req = if matches!(method, Method::Get) { self.agent.get(&url) } else { self.agent.delete(&url) };
                req = req.query_pairs(query.iter().copied());
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                req.call()
            }
            Method::Post => {
                let mut req = self.agent.post(&url).query_pairs(query.iter().copied());
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                match body {
                    Some(b) => req.header("Content-Type", "application/json").send(&b[..]),
                    None => req.send_empty(),
                }
            }
        };
        let transport = |e: ureq::Error| CliError::Transport(format!("cannot reach {}: {e}", self.settings.endpoint));
        let mut resp = result.map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().with_config().limit(1 << 30).read_to_string().map_err(transport)?;
        if (200..300).contains(&status) {
            return Ok(text);
        }
        let err = serde_json::from_str::<ApiError>(&text).unwrap_or_else(|_| ApiError {
            status,
            code: "http_error".into(),
            message: format!("HTTP {status}: {}", text.trim()),
            details: None,
        });
        Err(CliError::Api(err))
    }
}

/// Parses `args` and runs the command, writing results to `out` and errors to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{}", e.render()) } else { write!(err, "{}", e.render()) };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let command = match cli.command {
        Command::Serve(args) => return serve(args),
        Command::Fixture(FixtureCmd::Routes { rows, seed, out: path }) => {
            let csv = crate::fixture::routes_csv(rows, seed);
            return match path {
                Some(p) => std::fs::write(&p, csv).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
                None => out.write_all(csv.as_bytes()).map_err(|e| CliError::Transport(e.to_string())),
            };
        }
        other => other,
    };
    let file = load_file_config(config_path().as_deref())?;
    let settings = Settings::resolve(cli.endpoint, cli.token, cli.output, file)?;
    let json_mode = settings.output == OutputFormat::Json;
    let client = Client::new(settings);
    let text = dispatch(&client, command)?;
    let rendered = if json_mode { text.body } else { (text.table)(&parse_json(&text.body)?) };
    out.write_all(rendered.as_bytes()).map_err(|e| CliError::Transport(e.to_string()))
}

fn parse_json(text: &str) -> Result<Json, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Transport(format!("unexpected response body: {e}")))
}

struct Reply {
    body: String,
    table: fn(&Json) -> String,
}

fn reply(body: String, table: fn(&Json) -> String) -> Result<Reply, CliError> {
    Ok(Reply { body, table })
}

fn read_json_file(path: &Path) -> Result<Json, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn to_bytes(v: &Json) -> Vec<u8> {
    serde_json::to_vec(v).expect("json values serialize")
}

fn config_body(config: Option<PathBuf>) -> Result<Option<Vec<u8>>, CliError> {
    config.map(|p| read_json_file(&p).map(|c| to_bytes(&json!({ "config": c })))).transpose()
}

fn wait_until(client: &Client, path: &str, timeout: Duration, done: impl Fn(&Json) -> bool) -> Result<String, CliError> {
    let deadline = Instant::now() + timeout;
    loop {
        let body = client.call(Method::Get, path, &[], None)?;
        if done(&parse_json(&body)?) || Instant::now() >= deadline {
            return Ok(body);
        }
        std::thread::sleep(Duration::from_millis(200));
    }
}

fn dispatch(client: &Client, command: Command) -> Result<Reply, CliError> {
    use Method::*;
    match command {
        Command::Serve(_) | Command::Fixture(_) => unreachable!("handled locally"),
        Command::Service(cmd) => match cmd {
            ServiceCmd::Register { file } => {
                let body = to_bytes(&read_json_file(&file)?);
                reply(client.call(Post, "/services", &[], Some(body))?, render_entry_id)
            }
            ServiceCmd::List { kind, tag, text } => {
                let q: Vec<(&str, &str)> = [("kind", &kind), ("tag", &tag), ("text", &text)]
                    .into_iter()
                    .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
                    .collect();
                reply(client.call(Get, "/services", &q, None)?, render_services)
            }
            ServiceCmd::Get { name, version } => {
                let path = match version {
                    Some(v) => format!("/services/{name}/{v}"),
                    None => format!("/services/{name}"),
                };
                reply(client.call(Get, &path, &[], None)?, render_object)
            }
            ServiceCmd::Rm { name, version } => {
                reply(client.call(Delete, &format!("/services/{name}/{version}"), &[], None)?, render_removed)
            }
        },
        Command::Stream(cmd) => match cmd {
            StreamCmd::Create { name, dsl } => {
                reply(client.call(Post, "/streams", &[], Some(to_bytes(&json!({"name": name, "dsl": dsl}))))?, render_workflow)
            }
            StreamCmd::Deploy { name, config } => {
                reply(client.call(Post, &format!("/streams/{name}/deploy"), &[], config_body(config)?)?, render_run_id)
            }
            StreamCmd::Undeploy { name, destroy } => {
                let q: &[(&str, &str)] = if destroy { &[("destroy", "true")] } else { &[] };
                reply(client.call(Delete, &format!("/streams/{name}"), q, None)?, render_undeploy)
            }
            StreamCmd::List => reply(client.call(Get, "/streams", &[], None)?, render_workflows),
        },
        Command::Task(cmd) => match cmd {
            TaskCmd::Create { name, dsl } => {
                reply(client.call(Post, "/tasks", &[], Some(to_bytes(&json!({"name": name, "dsl": dsl}))))?, render_workflow)
            }
            TaskCmd::Launch { name, config, wait, timeout_secs } => {
                let body = client.call(Post, &format!("/tasks/{name}/launch"), &[], config_body(config)?)?;
                if !wait {
                    return reply(body, render_run_id);
                }
                let id = parse_json(&body)?["run_id"].as_str().unwrap_or_default().to_string();
                let done = |r: &Json| matches!(r["state"].as_str(), Some("completed" | "failed" | "undeployed"));
                reply(wait_until(client, &format!("/runs/{id}"), Duration::from_secs(timeout_secs), done)?, render_object)
            }
            TaskCmd::List => reply(client.call(Get, "/tasks", &[], None)?, render_workflows),
        },
        Command::Run(cmd) => match cmd {
            RunCmd::List { workflow, state } => {
                let q: Vec<(&str, &str)> = [("workflow", &workflow), ("state", &state)]
                    .into_iter()
                    .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
                    .collect();
                reply(client.call(Get, "/runs", &q, None)?, render_runs)
            }
            RunCmd::Get { id } => reply(client.call(Get, &format!("/runs/{id}"), &[], None)?, render_object),
            RunCmd::Metrics { id } => reply(client.call(Get, &format!("/runs/{id}/metrics"), &[], None)?, render_metrics),
        },
        Command::Optimize(cmd) => match cmd {
            OptimizeCmd::Run { file, seed, training_n, budget, executor, wait, timeout_secs } => {
                let mut req = match file {
                    Some(p) => read_json_file(&p)?,
                    None => json!({}),
                };
                let Some(obj) = req.as_object_mut() else {
                    return Err(CliError::Usage("job request file must hold a JSON object".into()));
                };
                if let Some(s) = seed {
                    obj.insert("seed".into(), json!(s));
                }
                if let Some(n) = training_n {
                    obj.insert("training_n".into(), json!(n));
                }
                if let Some(b) = budget {
                    let rrs = obj.entry("rrs").or_insert_with(|| json!({}));
                    rrs["eval_budget"] = json!(b);
                }
                match executor.as_deref() {
                    None => {}
                    Some("simulated") => {
                        obj.insert("executor".into(), json!({"kind": "simulated"}));
                    }
                    Some("derivative") => {
                        obj.insert("executor".into(), json!({"kind": "derivative"}));
                    }
                    Some(other) => return Err(CliError::Usage(format!("unknown executor `{other}`"))),
                }
                let body = client.call(Post, "/optimizer/jobs", &[], Some(to_bytes(&req)))?;
                if !wait {
                    return reply(body, render_job_id);
                }
                let id = parse_json(&body)?["job_id"].as_str().unwrap_or_default().to_string();
                let done = |r: &Json| r["state"].as_str() != Some("running");
                reply(wait_until(client, &format!("/optimizer/jobs/{id}"), Duration::from_secs(timeout_secs), done)?, render_report)
            }
            OptimizeCmd::Status { id } => reply(client.call(Get, &format!("/optimizer/jobs/{id}"), &[], None)?, render_report),
        },
        Command::Viz(cmd) => match cmd {
            VizCmd::Sources { kind: None, .. } => reply(client.call(Get, "/viz/sources", &[], None)?, render_sources),
            VizCmd::Sources { kind: Some(kind), location, id } => {
                let body = json!({"id": id, "kind": kind, "location": location.unwrap_or_default()});
                reply(client.call(Post, "/viz/sources", &[], Some(to_bytes(&body)))?, render_object)
            }
            VizCmd::Tables { source } => reply(client.call(Get, &format!("/viz/sources/{source}/tables"), &[], None)?, render_tables),
            VizCmd::Query(args) => {
                let spec = query_spec(args)?;
                reply(client.call(Post, "/viz/query", &[], Some(to_bytes(&spec)))?, render_frame)
            }
            VizCmd::Recommend(args) => {
                let spec = query_spec(args)?;
                reply(client.call(Post, "/viz/recommend", &[], Some(to_bytes(&json!({"query": spec}))))?, render_recommendations)
            }
        },
    }
}

fn literal(text: &str) -> Value {
    if let Ok(i) = text.parse::<i64>() {
        Value::Int(i)
    } else if let Ok(f) = text.parse::<f64>() {
        Value::Float(f)
    } else if let Ok(b) = text.parse::<bool>() {
        Value::Bool(b)
    } else {
        Value::Str(text.to_string())
    }
}

fn parse_filter(text: &str) -> Result<Filter, CliError> {
    let bad = || CliError::Usage(format!("filter `{text}` is not `column op value`"));
    let mut parts = text.trim().splitn(3, char::is_whitespace);
    let column = parts.next().filter(|c| !c.is_empty()).ok_or_else(bad)?;
    let op = parts.next().and_then(FilterOp::parse).ok_or_else(bad)?;
    let value = parts.next().map(str::trim).ok_or_else(bad)?;
    Ok(Filter { column: column.into(), op, value: literal(value) })
}

fn parse_aggregate(text: &str) -> Result<Aggregate, CliError> {
    let bad = || CliError::Usage(format!("aggregate `{text}` is not `fn:column`"));
    let (f, column) = text.split_once(':').ok_or_else(bad)?;
    let func: AggFn = serde_json::from_value(json!(f)).map_err(|_| bad())?;
    Ok(Aggregate { func, column: column.into() })
}

fn query_spec(args: QueryArgs) -> Result<Json, CliError> {
    if let Some(path) = args.file {
        return read_json_file(&path);
    }
    let spec = QuerySpec {
        source_id: args.source,
        table: args.table.unwrap_or_default(),
        select: args.select,
        filters: args.filters.iter().map(|f| parse_filter(f)).collect::<Result<_, _>>()?,
        group_by: args.group_by,
        aggregates: args.aggregates.iter().map(|a| parse_aggregate(a)).collect::<Result<_, _>>()?,
        limit: args.limit,
    };
    Ok(serde_json::to_value(spec).expect("query specs serialize"))
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let mut config = ServeConfig::from_env().map_err(CliError::Usage)?;
    if let Some(h) = args.host {
        config.host = h;
    }
    if let Some(p) = args.port {
        config.port = p;
    }
    if let Some(d) = args.data_dir {
        config.data_dir = d;
    }
    if let Some(t) = args.auth_token {
        config.auth_token = Some(t).filter(|t| !t.is_empty());
    }
    if let Some(u) = args.ui_dir {
        config.ui_dir = Some(u);
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Transport(e.to_string()))?;
    eprintln!("flowforge listening on http://{}", config.addr());
    runtime
        .block_on(gateway::serve(config, async {
            let _ = tokio::signal::ctrl_c().await;
        }))
        .map_err(|e| CliError::Transport(e.to_string()))
}

// table rendering

fn cell(v: &Json) -> String {
    match v {
        Json::Null => "-".into(),
        Json::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.zip(&widths).enumerate() {
            if i + 1 == widths.len() {
                s.push_str(c);
            } else {
                s.push_str(&format!("{c:<w$}  "));
            }
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(&mut headers.iter().copied());
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
    }
    out
}

fn rows_of(v: &Json, columns: &[&str]) -> Vec<Vec<String>> {
    v.as_array()
        .map(|items| items.iter().map(|item| columns.iter().map(|c| cell(&item[*c])).collect()).collect())
        .unwrap_or_default()
}

fn render_object(v: &Json) -> String {
    match v.as_object() {
        Some(map) => {
            let width = map.keys().map(String::len).max().unwrap_or(0);
            map.iter().map(|(k, v)| format!("{k:<width$}  {}\n", cell(v))).collect()
        }
        None => format!("{}\n", cell(v)),
    }
}

fn render_entry_id(v: &Json) -> String {
    format!("{}@{}\n", cell(&v["name"]), cell(&v["version"]))
}

fn render_removed(v: &Json) -> String {
    format!("removed {}\n", render_entry_id(v).trim_end())
}

fn render_services(v: &Json) -> String {
    table(&["NAME", "VERSION", "KIND", "FRAMEWORK", "DESCRIPTION"], &rows_of(v, &["name", "version", "kind", "framework", "description"]))
}

fn render_workflow(v: &Json) -> String {
    format!("{} {} defined\n", cell(&v["mode"]), cell(&v["name"]))
}

fn render_workflows(v: &Json) -> String {
    table(&["NAME", "MODE", "ACTIVE RUN", "DSL"], &rows_of(v, &["name", "mode", "active_run", "dsl"]))
}

fn render_run_id(v: &Json) -> String {
    format!("{}\n", cell(&v["run_id"]))
}

fn render_job_id(v: &Json) -> String {
    format!("{}\n", cell(&v["job_id"]))
}

fn render_undeploy(v: &Json) -> String {
    let mut s = match &v["run"] {
        Json::Null => String::from("no active run\n"),
        run => format!("{} {}\n", cell(&run["run_id"]), cell(&run["state"])),
    };
    if v["destroyed"] == Json::Bool(true) {
        s.push_str("definition removed\n");
    }
    s
}

fn render_runs(v: &Json) -> String {
    table(&["RUN", "WORKFLOW", "MODE", "STATE", "STARTED"], &rows_of(v, &["run_id", "workflow_name", "mode", "state", "started_at"]))
}

fn render_metrics(v: &Json) -> String {
    let mut rows = Vec::new();
    if let Some(nodes) = v["nodes"].as_object() {
        for (node, m) in nodes {
            rows.push(vec![node.clone(), cell(&m["records_in"]), cell(&m["records_out"]), cell(&m["execution_time_ms"])]);
        }
    }
    let mut out = format!("{}  execution_time_ms={}\n", cell(&v["run_id"]), cell(&v["execution_time_ms"]));
    out.push_str(&table(&["NODE", "IN", "OUT", "TIME MS"], &rows));
    out
}

fn render_report(v: &Json) -> String {
    let mut out = String::new();
    for key in ["job_id", "state", "stage", "default_metric_ms", "exploration_size", "error"] {
        out.push_str(&format!("{key:<18}  {}\n", cell(&v[key])));
    }
    if let Some(rec) = v["recommended"]["assignment"].as_object() {
        let parts: Vec<String> = rec.iter().map(|(k, x)| format!("{k}={}", cell(x))).collect();
        out.push_str(&format!("{:<18}  {}\n", "recommended", parts.join(" ")));
    }
    for (key, field) in [("predicted_ratio", &v["predicted"]["predicted_ratio"]), ("measured_ms", &v["measured"]["metric_ms"])] {
        if !field.is_null() {
            out.push_str(&format!("{key:<18}  {}\n", cell(field)));
        }
    }
    out
}

fn render_sources(v: &Json) -> String {
    table(&["ID", "KIND", "LOCATION"], &rows_of(v, &["id", "kind", "location"]))
}

fn render_tables(v: &Json) -> String {
    let rows: Vec<Vec<String>> = v
        .as_array()
        .into_iter()
        .flatten()
        .map(|t| {
            let cols: Vec<String> = t["columns"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|c| format!("{}:{}", cell(&c["name"]), cell(&c["dtype"])))
                .collect();
            vec![cell(&t["name"]), cell(&t["row_count"]), cols.join(",")]
        })
        .collect();
    table(&["TABLE", "ROWS", "COLUMNS"], &rows)
}

fn render_frame(v: &Json) -> String {
    let headers: Vec<String> = v["schema"].as_array().into_iter().flatten().map(|f| cell(&f["name"])).collect();
    let rows: Vec<Vec<String>> = v["rows"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|r| r.as_array().into_iter().flatten().map(cell).collect())
        .collect();
    let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
    table(&headers, &rows)
}

fn render_recommendations(v: &Json) -> String {
    let rows: Vec<Vec<String>> = v
        .as_array()
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, r)| {
            let e = &r["encoding"];
            vec![(i + 1).to_string(), cell(&r["chart_type"]), cell(&e["x"]), cell(&e["y"]), cell(&e["color"]), cell(&r["score"])]
        })
        .collect();
    table(&["RANK", "CHART", "X", "Y", "COLOR", "SCORE"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_urls() {
        for ok in ["http://localhost:8080", "https://example.org", "http://127.0.0.1:1/base", "http://[::1]:80"] {
            assert!(is_endpoint_url(ok), "{ok}");
        }
        for bad in ["localhost:8080", "ftp://x", "http://", "http://host:notaport", "http://a b"] {
            assert!(!is_endpoint_url(bad), "{bad}");
        }
    }

    #[test]
    fn file_fills_missing_settings() {
        let file = FileConfig { endpoint: Some("http://file:1".into()), token: None, output: Some(OutputFormat::Json) };
        let s = Settings::resolve(Some("http://flag:2/".into()), None, None, file).unwrap();
        assert_eq!(s.endpoint, "http://flag:2");
        assert_eq!(s.output, OutputFormat::Json);
    }

    #[test]
    fn filters_and_aggregates_parse() {
        let f = parse_filter("cluster >= 2").unwrap();
        assert_eq!((f.column.as_str(), f.op, f.value), ("cluster", FilterOp::Ge, Value::Int(2)));
        let f = parse_filter("airline = AA X").unwrap();
        assert_eq!(f.value, Value::Str("AA X".into()));
        assert!(parse_filter("cluster ~ 2").is_err());
        let a = parse_aggregate("count:*").unwrap();
        assert_eq!((a.func, a.column.as_str()), (AggFn::Count, "*"));
        assert!(parse_aggregate("median:x").is_err());
    }

    #[test]
    fn table_pads_columns() {
        let t = table(&["A", "BB"], &[vec!["xxx".into(), "y".into()]]);
        assert_eq!(t, "A    BB\nxxx  y\n");
    }
}
