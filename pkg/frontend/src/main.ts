import { startStudio } from "./ui.js";

const params = new URLSearchParams(window.location.search);
startStudio(params.get("api") ?? "http://127.0.0.1:8000");
