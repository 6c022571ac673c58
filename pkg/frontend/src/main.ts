import { StudioApp } from "./ui.js";

const defaultBase = `${location.protocol}//${location.hostname}:8787`;
const input = document.getElementById("base-url") as HTMLInputElement;
input.value = defaultBase;

const app = new StudioApp(defaultBase);
app.start().catch((err) => {
  console.error("studio failed to start", err);
});
