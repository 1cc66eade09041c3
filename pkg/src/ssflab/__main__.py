from ssflab.main import app

app()
