import { ServiceClient } from "./api";
import { ConsoleApp } from "./app";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "http://127.0.0.1:8750";

const root = document.getElementById("console");
if (!root) throw new Error("missing #console mount point");

const app = new ConsoleApp(root, new ServiceClient(base));
app.startPolling();
