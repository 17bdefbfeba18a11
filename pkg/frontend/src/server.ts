// Static host for the UI plus a same-origin proxy to the analysis service,
// so the browser app never has to deal with cross-origin requests.

import express from "express";
import path from "node:path";
import { fileURLToPath } from "node:url";

const here = path.dirname(fileURLToPath(import.meta.url));
const root = path.resolve(here, "..");

const port = Number(process.env.UI_PORT ?? 8800);
const serviceUrl = (process.env.SERVICE_URL ?? "http://127.0.0.1:8900").replace(/\/+$/, "");

const app = express();
app.use(express.raw({ type: () => true, limit: "64mb" }));
app.use("/dist", express.static(path.join(root, "dist")));
app.use(express.static(path.join(root, "public")));

app.all(/^\/api\/(.*)/, async (req, res) => {
  const target = serviceUrl + req.originalUrl.slice("/api".length);
  const headers: Record<string, string> = {};
  const contentType = req.headers["content-type"];
  if (typeof contentType === "string") headers["content-type"] = contentType;
  const apiKey = req.headers["x-api-key"] ?? process.env.SERVICE_API_KEY;
  if (typeof apiKey === "string") headers["x-api-key"] = apiKey;

  try {
    const body =
      req.method === "GET" || req.method === "HEAD"
        ? undefined
        : new Uint8Array(req.body as Buffer);
    const upstream = await fetch(target, { method: req.method, headers, body });
    res.status(upstream.status);
    const type = upstream.headers.get("content-type");
    if (type) res.type(type);
    res.send(Buffer.from(await upstream.arrayBuffer()));
  } catch (err) {
    res.status(502).json({
      code: "upstream_unreachable",
      message: err instanceof Error ? err.message : String(err),
      stage: "proxy",
    });
  }
});

app.listen(port, () => {
  console.log(`ui listening on http://127.0.0.1:${port}, proxying /api to ${serviceUrl}`);
});
